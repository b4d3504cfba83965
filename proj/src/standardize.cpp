#include "laminar/standardize.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "laminar/parallel.hpp"

namespace laminar::intensity {

void LandmarkModel::validate() const {
  if (!(scale_hi > scale_lo)) fail(ErrorKind::data, "landmark model scale must satisfy lo < hi");
  for (std::size_t k = 1; k < kLandmarkCount; ++k) {
    if (!(percentiles[k] > percentiles[k - 1])) fail(ErrorKind::data, "landmark percentiles must strictly increase");
    if (targets[k] < targets[k - 1]) fail(ErrorKind::data, "landmark targets must not decrease");
  }
  if (percentiles.front() < 0.0 || percentiles.back() > 100.0) {
    fail(ErrorKind::data, "landmark percentiles must lie in [0, 100]");
  }
}

std::string LandmarkModel::to_json() const {
  nlohmann::json j;
  j["scale"] = {scale_lo, scale_hi};
  j["percentiles"] = percentiles;
  j["targets"] = targets;
  return j.dump(2);
}

LandmarkModel LandmarkModel::from_json(const std::string& text) {
  LandmarkModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [key, value] : j.items()) {
      if (key != "scale" && key != "percentiles" && key != "targets") {
        fail(ErrorKind::format, "landmark model: unknown key '" + key + "'");
      }
    }
    const auto scale = j.at("scale").get<std::vector<double>>();
    const auto pct = j.at("percentiles").get<std::vector<double>>();
    const auto tgt = j.at("targets").get<std::vector<double>>();
    if (scale.size() != 2 || pct.size() != kLandmarkCount || tgt.size() != kLandmarkCount) {
      fail(ErrorKind::format, "landmark model needs scale[2], percentiles[11], targets[11]");
    }
    m.scale_lo = scale[0];
    m.scale_hi = scale[1];
    std::copy(pct.begin(), pct.end(), m.percentiles.begin());
    std::copy(tgt.begin(), tgt.end(), m.targets.begin());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("landmark model: ") + e.what());
  }
  m.validate();
  return m;
}

double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) fail(ErrorKind::data, "percentile of an empty sample");
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  if (t == 0.0) return sorted[lo];
  return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

std::vector<double> masked_sorted(const ScalarVolume& v, const MaskVolume& mask) {
  require_same_geometry(v, mask, "intensity mask");
  std::vector<double> values;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) values.push_back(v[i]);
  }
  if (values.empty()) fail(ErrorKind::data, "intensity standardization mask is empty");
  std::sort(values.begin(), values.end());
  return values;
}

Landmarks subject_landmarks(const ScalarVolume& v, const MaskVolume& mask, const Landmarks& percentiles) {
  const auto sorted = masked_sorted(v, mask);
  Landmarks out{};
  for (std::size_t k = 0; k < kLandmarkCount; ++k) out[k] = percentile(sorted, percentiles[k]);
  if (!(out.back() > out.front())) fail(ErrorKind::data, "subject has constant intensity inside the mask");
  return out;
}

LandmarkModel train_landmarks(const std::vector<ScalarVolume>& volumes, const std::vector<MaskVolume>& masks,
                              double scale_lo, double scale_hi) {
  if (volumes.empty()) fail(ErrorKind::data, "landmark training needs at least one subject");
  if (volumes.size() != masks.size()) fail(ErrorKind::data, "one mask per training subject is required");
  LandmarkModel model;
  model.scale_lo = scale_lo;
  model.scale_hi = scale_hi;
  Landmarks sum{};
  for (std::size_t s = 0; s < volumes.size(); ++s) {
    const auto lm = subject_landmarks(volumes[s], masks[s], model.percentiles);
    const double span = lm.back() - lm.front();
    for (std::size_t k = 0; k < kLandmarkCount; ++k) {
      sum[k] += scale_lo + (lm[k] - lm.front()) / span * (scale_hi - scale_lo);
    }
  }
  for (std::size_t k = 0; k < kLandmarkCount; ++k) {
    model.targets[k] = sum[k] / static_cast<double>(volumes.size());
    if (k > 0) model.targets[k] = std::max(model.targets[k], model.targets[k - 1]);
  }
  model.validate();
  return model;
}

ScalarVolume standardize(const ScalarVolume& v, const MaskVolume& mask, const LandmarkModel& model) {
  model.validate();
  const auto src = subject_landmarks(v, mask, model.percentiles);
  const auto& dst = model.targets;

  // Segment k maps [src[k], src[k+1]]; zero-width segments are skipped so the
  // map stays a function.
  auto map = [&](double x) {
    std::size_t k = 0;
    if (x <= src.front()) {
      k = 0;
      while (k + 2 < kLandmarkCount && src[k + 1] == src[k]) ++k;
    } else if (x >= src.back()) {
      k = kLandmarkCount - 2;
      while (k > 0 && src[k + 1] == src[k]) --k;
    } else {
      k = static_cast<std::size_t>(std::upper_bound(src.begin(), src.end(), x) - src.begin()) - 1;
      if (k >= kLandmarkCount - 1) k = kLandmarkCount - 2;
    }
    const double w = src[k + 1] - src[k];
    if (w == 0.0) return dst[k];
    if (x == src[k]) return dst[k];
    if (x == src[k + 1]) return dst[k + 1];
    const double slope = (dst[k + 1] - dst[k]) / w;
    return dst[k] + slope * (x - src[k]);
  };

  ScalarVolume out(v.geometry());
  parallel_for(v.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = map(v[i]);
  });
  return out;
}

}  // namespace laminar::intensity
