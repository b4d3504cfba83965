#include "laminar/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "laminar/parallel.hpp"
#include "laminar/standardize.hpp"

namespace laminar::tissue {

TissueClass parse_tissue_class(const std::string& name) {
  if (name == "wm") return TissueClass::wm;
  if (name == "gm") return TissueClass::gm;
  if (name == "csf") return TissueClass::csf;
  if (name == "other") return TissueClass::other;
  fail(ErrorKind::parameter, "unknown tissue class '" + name + "' (expected wm, gm, csf or other)");
}

const char* to_string(TissueClass c) {
  switch (c) {
    case TissueClass::wm: return "wm";
    case TissueClass::gm: return "gm";
    case TissueClass::csf: return "csf";
    case TissueClass::other: return "other";
  }
  return "other";
}

namespace {

// Neumaier-compensated running sum; deterministic for a fixed input order.
struct Accumulator {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

std::vector<GmmClass> initial_classes(const ScalarVolume& v, const MaskVolume& mask, int classes) {
  const auto sorted = intensity::masked_sorted(v, mask);
  Accumulator s, s2;
  for (double x : sorted) s.add(x);
  const double mean = s.value() / static_cast<double>(sorted.size());
  for (double x : sorted) s2.add((x - mean) * (x - mean));
  const double var = s2.value() / static_cast<double>(sorted.size());
  std::vector<GmmClass> out(static_cast<std::size_t>(classes));
  for (int k = 0; k < classes; ++k) {
    out[k].mean = intensity::percentile(sorted, 100.0 * (k + 1) / (classes + 1));
    out[k].variance = var / classes;
  }
  return out;
}

EmResult fit_em(const ScalarVolume& v, const MaskVolume& mask, const std::vector<ScalarVolume>& priors,
                const EmOptions& options) {
  const int K = options.classes;
  if (K < 2) fail(ErrorKind::parameter, "EM needs at least 2 classes");
  if (options.max_iter < 0 || !(options.tol >= 0.0)) fail(ErrorKind::parameter, "EM tol/max_iter must be nonnegative");
  require_same_geometry(v, mask, "EM mask");
  if (!priors.empty() && priors.size() != static_cast<std::size_t>(K)) {
    fail(ErrorKind::data, "expected " + std::to_string(K) + " prior volumes, got " + std::to_string(priors.size()));
  }
  for (const auto& p : priors) require_same_geometry(v, p, "EM prior");

  std::vector<std::size_t> voxels;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) voxels.push_back(i);
  }
  if (voxels.size() <= static_cast<std::size_t>(10 * K)) {
    fail(ErrorKind::data, "EM mask holds too few voxels for " + std::to_string(K) + " classes");
  }
  const std::size_t n = voxels.size();
  std::vector<double> log_prior(n * K);
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      const double p = priors.empty() ? 1.0 / K : priors[k][voxels[j]];
      if (!(p >= 0.0) || !std::isfinite(p)) fail(ErrorKind::data, "prior probabilities must be finite and >= 0");
      sum += p;
      log_prior[j * K + k] = p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    }
    if (std::abs(sum - 1.0) > 1e-6) fail(ErrorKind::data, "priors do not sum to 1 inside the mask");
  }

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto i : voxels) {
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  if (!(hi > lo)) fail(ErrorKind::data, "EM input is constant inside the mask");

  EmResult result;
  result.variance_floor = std::pow(1e-3 * (hi - lo), 2);
  result.classes = initial_classes(v, mask, K);
  for (auto& c : result.classes) c.variance = std::max(c.variance, result.variance_floor);

  std::vector<double> resp(n * K);
  std::vector<double> voxel_ll(n);

  auto e_step = [&]() {
    std::vector<double> log_norm(K), inv_var(K);
    for (int k = 0; k < K; ++k) {
      log_norm[k] = -0.5 * std::log(2.0 * std::numbers::pi * result.classes[k].variance);
      inv_var[k] = 1.0 / result.classes[k].variance;
    }
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      std::vector<double> lp(K);
      for (std::size_t j = b; j < e; ++j) {
        const double x = v[voxels[j]];
        double best = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
          const double d = x - result.classes[k].mean;
          lp[k] = log_prior[j * K + k] + log_norm[k] - 0.5 * d * d * inv_var[k];
          best = std::max(best, lp[k]);
        }
        double s = 0.0;
        for (int k = 0; k < K; ++k) s += std::isinf(lp[k]) ? 0.0 : std::exp(lp[k] - best);
        for (int k = 0; k < K; ++k) resp[j * K + k] = std::isinf(lp[k]) ? 0.0 : std::exp(lp[k] - best) / s;
        voxel_ll[j] = best + std::log(s);
      }
    });
    Accumulator ll;
    for (double x : voxel_ll) ll.add(x);
    return ll.value();
  };

  double ll = e_step();
  result.log_likelihood.push_back(ll);
  for (int it = 0; it < options.max_iter; ++it) {
    for (int k = 0; k < K; ++k) {
      Accumulator mass, first;
      for (std::size_t j = 0; j < n; ++j) {
        mass.add(resp[j * K + k]);
        first.add(resp[j * K + k] * v[voxels[j]]);
      }
      auto& c = result.classes[k];
      if (mass.value() < 1e-6) {
        c.variance = result.variance_floor;
        c.degenerate = true;
        result.degenerate_warning = true;
        continue;
      }
      c.mean = first.value() / mass.value();
      Accumulator second;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = v[voxels[j]] - c.mean;
        second.add(resp[j * K + k] * d * d);
      }
      c.variance = std::max(second.value() / mass.value(), result.variance_floor);
    }
    const double next = e_step();
    result.log_likelihood.push_back(next);
    result.iterations = it + 1;
    const double change = std::abs(next - ll) / std::max(std::abs(next), 1e-300);
    ll = next;
    if (change < options.tol) {
      result.converged = true;
      break;
    }
  }

  result.posteriors.assign(K, ScalarVolume(v.geometry()));
  for (std::size_t j = 0; j < n; ++j) {
    for (int k = 0; k < K; ++k) result.posteriors[k][voxels[j]] = resp[j * K + k];
  }
  return result;
}

HardSegmentation hard_segment(const std::vector<ScalarVolume>& posteriors, const MaskVolume& mask,
                              const std::vector<TissueClass>& class_map) {
  if (posteriors.empty()) fail(ErrorKind::data, "no posterior volumes");
  if (class_map.size() != posteriors.size()) fail(ErrorKind::parameter, "class_map must cover every class");
  for (const auto& p : posteriors) require_same_geometry(p, mask, "posterior");
  HardSegmentation out{MaskVolume(mask.geometry()), MaskVolume(mask.geometry()), LabelVolume(mask.geometry())};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < posteriors.size(); ++k) {
      if (posteriors[k][i] > posteriors[best][i]) best = k;
    }
    out.labels[i] = static_cast<std::int32_t>(best + 1);
    out.wm[i] = class_map[best] == TissueClass::wm;
    out.gm[i] = class_map[best] == TissueClass::gm;
  }
  return out;
}

}  // namespace laminar::tissue
