#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "laminar/volume.hpp"

namespace laminar::region {

struct RegionMean {
  int label = 0;
  std::size_t count = 0;  // contributing voxels
  std::optional<double> mean;  // absent when no voxel of the region carries a value
};

/// Arithmetic mean of `values` over voxels in `where` for each nonzero label.
std::vector<RegionMean> regional_means(const ScalarVolume& values, const MaskVolume& where,
                                       const LabelVolume& parcellation);

/// Voxel count and volume per nonzero label.
std::map<int, std::size_t> region_voxel_counts(const LabelVolume& parcellation, const MaskVolume* within = nullptr);

enum class TivMode { ratio, cuberoot };

TivMode parse_tiv_mode(const std::string& s);
const char* to_string(TivMode m);

double tiv_normalize(double value, double tiv_mm3, TivMode mode);
std::vector<double> tiv_normalize(const std::vector<double>& values, double tiv_mm3, TivMode mode);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

/// Welch two-sample t test with Welch-Satterthwaite degrees of freedom and a
/// two-sided p value. Returns nullopt when either group has fewer than 2 values.
std::optional<WelchResult> welch_test(const std::vector<double>& a, const std::vector<double>& b);

/// Benjamini-Hochberg step-up decisions at level q.
std::vector<bool> fdr_correct(const std::vector<double>& p_values, double q = 0.1);

/// Sum over the sheet of voxel volume divided by the voxel's extent along the
/// local normal. Voxels with a zero normal fall back to the thinnest axis.
struct AreaResult {
  double area_mm2 = 0.0;
  std::size_t fallback_voxels = 0;
};
AreaResult purkinje_area(const MaskVolume& sheet, const VectorField& normal);

}  // namespace laminar::region
