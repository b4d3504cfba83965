#pragma once

#include <array>
#include <string>
#include <vector>

#include "laminar/volume.hpp"

namespace laminar::intensity {

inline constexpr std::size_t kLandmarkCount = 11;
using Landmarks = std::array<double, kLandmarkCount>;

/// 1st and 99th percentile ends plus the deciles.
inline constexpr Landmarks kDefaultPercentiles{1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 99};

struct LandmarkModel {
  double scale_lo = 0.0;
  double scale_hi = 1000.0;
  Landmarks percentiles = kDefaultPercentiles;
  Landmarks targets{};

  /// Throws a data error unless percentiles strictly increase and targets do not decrease.
  void validate() const;

  std::string to_json() const;
  static LandmarkModel from_json(const std::string& text);
};

/// Percentile with linear interpolation of the sorted in-mask values.
double percentile(const std::vector<double>& sorted, double p);

/// In-mask values sorted ascending; throws a data error for an empty mask.
std::vector<double> masked_sorted(const ScalarVolume& v, const MaskVolume& mask);

/// Subject landmark intensities at the model's percentile positions.
Landmarks subject_landmarks(const ScalarVolume& v, const MaskVolume& mask,
                            const Landmarks& percentiles = kDefaultPercentiles);

LandmarkModel train_landmarks(const std::vector<ScalarVolume>& volumes, const std::vector<MaskVolume>& masks,
                              double scale_lo = 0.0, double scale_hi = 1000.0);

/// Piecewise-linear transfer sending subject landmarks to the standard ones,
/// extended linearly beyond the end landmarks. Applied to every voxel.
ScalarVolume standardize(const ScalarVolume& v, const MaskVolume& mask, const LandmarkModel& model);

}  // namespace laminar::intensity
