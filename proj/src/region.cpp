#include "laminar/region.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace laminar::region {

std::vector<RegionMean> regional_means(const ScalarVolume& values, const MaskVolume& where,
                                       const LabelVolume& parcellation) {
  require_same_geometry(values, where, "regional_means mask");
  require_same_geometry(values, parcellation, "regional_means parcellation");
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int l = parcellation[i];
    if (l == 0) continue;
    auto& slot = acc[l];
    if (where[i]) {
      slot.first += values[i];
      ++slot.second;
    }
  }
  std::vector<RegionMean> out;
  for (const auto& [label, s] : acc) {
    RegionMean m{label, s.second, std::nullopt};
    if (s.second > 0) m.mean = s.first / static_cast<double>(s.second);
    out.push_back(m);
  }
  return out;
}

std::map<int, std::size_t> region_voxel_counts(const LabelVolume& parcellation, const MaskVolume* within) {
  if (within) require_same_geometry(parcellation, *within, "region_voxel_counts");
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < parcellation.size(); ++i) {
    if (parcellation[i] == 0) continue;
    if (within && !(*within)[i]) continue;
    ++counts[parcellation[i]];
  }
  return counts;
}

TivMode parse_tiv_mode(const std::string& s) {
  if (s == "ratio") return TivMode::ratio;
  if (s == "cuberoot") return TivMode::cuberoot;
  fail(ErrorKind::parameter, "tiv_mode must be 'ratio' or 'cuberoot'");
}

const char* to_string(TivMode m) { return m == TivMode::ratio ? "ratio" : "cuberoot"; }

double tiv_normalize(double value, double tiv_mm3, TivMode mode) {
  if (!(tiv_mm3 > 0.0) || !std::isfinite(tiv_mm3)) fail(ErrorKind::parameter, "TIV must be positive");
  return mode == TivMode::ratio ? value / tiv_mm3 : value / std::cbrt(tiv_mm3);
}

std::vector<double> tiv_normalize(const std::vector<double>& values, double tiv_mm3, TivMode mode) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(tiv_normalize(v, tiv_mm3, mode));
  return out;
}

std::optional<WelchResult> welch_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) return std::nullopt;
  auto moments = [](const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  WelchResult r;
  r.mean_a = ma;
  r.mean_b = mb;
  const double sa = va / static_cast<double>(a.size());
  const double sb = vb / static_cast<double>(b.size());
  const double se2 = sa + sb;
  if (se2 == 0.0) {
    if (ma == mb) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    r.df = static_cast<double>(a.size() + b.size() - 2);
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(r.df);
  r.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))), 0.0, 1.0);
  return r;
}

std::vector<bool> fdr_correct(const std::vector<double>& p_values, double q) {
  if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::parameter, "FDR level q must lie in (0, 1)");
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::size_t k = 0;
  for (std::size_t r = m; r >= 1; --r) {
    if (p_values[order[r - 1]] <= static_cast<double>(r) / static_cast<double>(m) * q) {
      k = r;
      break;
    }
  }
  std::vector<bool> reject(m, false);
  for (std::size_t r = 0; r < k; ++r) reject[order[r]] = true;
  return reject;
}

AreaResult purkinje_area(const MaskVolume& sheet, const VectorField& normal) {
  require_same_geometry(sheet, normal, "purkinje_area");
  const auto& s = sheet.geometry().spacing;
  const double vol = s[0] * s[1] * s[2];
  AreaResult r;
  for (std::size_t i = 0; i < sheet.size(); ++i) {
    if (!sheet[i]) continue;
    const Vec3& n = normal[i];
    const double len = norm(n);
    double extent = 0.0;
    if (len > 0.0) {
      for (int a = 0; a < 3; ++a) extent += std::abs(n[a] / len) * s[a];
    } else {
      extent = *std::min_element(s.begin(), s.end());
      ++r.fallback_voxels;
    }
    r.area_mm2 += vol / extent;
  }
  return r;
}

}  // namespace laminar::region
