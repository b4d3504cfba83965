#pragma once

#include <string>
#include <vector>

#include "laminar/volume.hpp"

namespace laminar::tissue {

enum class TissueClass { wm, gm, csf, other };

TissueClass parse_tissue_class(const std::string& name);
const char* to_string(TissueClass c);

struct GmmClass {
  double mean = 0.0;
  double variance = 1.0;
  bool degenerate = false;  // hit the responsibility-mass floor at least once
};

struct EmOptions {
  int classes = 4;
  double tol = 1e-6;
  int max_iter = 200;
};

struct EmResult {
  std::vector<GmmClass> classes;
  /// One responsibility volume per class; zero outside the mask.
  std::vector<ScalarVolume> posteriors;
  /// Log-likelihood at the initial parameters followed by one entry per EM round.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
  bool degenerate_warning = false;
  double variance_floor = 0.0;
};

/// Equally spaced in-mask percentiles for the means, global variance / K.
std::vector<GmmClass> initial_classes(const ScalarVolume& v, const MaskVolume& mask, int classes);

/// EM for a Gaussian mixture whose mixing weights are the per-voxel priors.
/// Empty `priors` means flat priors 1/K.
EmResult fit_em(const ScalarVolume& v, const MaskVolume& mask, const std::vector<ScalarVolume>& priors,
                const EmOptions& options);

struct HardSegmentation {
  MaskVolume wm;
  MaskVolume gm;
  LabelVolume labels;  // argmax class + 1 inside the mask, 0 outside
};

/// Argmax with ties resolved to the lowest class index.
HardSegmentation hard_segment(const std::vector<ScalarVolume>& posteriors, const MaskVolume& mask,
                              const std::vector<TissueClass>& class_map);

}  // namespace laminar::tissue
