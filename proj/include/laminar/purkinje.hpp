#pragma once

#include <vector>

#include "laminar/thickness.hpp"
#include "laminar/volume.hpp"

namespace laminar::purkinje {

struct PlanarFilterParams {
  double scale_mm = 0.04;
  double alpha = 0.5;
  double beta = 0.5;
  /// Structureness threshold; <= 0 selects half the largest in-GM Hessian norm.
  double c = 0.0;
  double tau_p = 0.05;
};

/// Planar-structure measure for one voxel from its sorted eigenvalues
/// (|l1| <= |l2| <= |l3|) and Hessian norm S. Zero unless l2 and l3 are both
/// nonpositive; zero as well when l3 vanishes.
double planar_measure(const Vec3& eigenvalues, double structureness, double alpha, double beta, double c);

struct PlanarResponse {
  ScalarVolume response;  // in [0, 1), zero outside GM
  /// Same measure gated only on the across-sheet eigenvalue being negative.
  ScalarVolume ridge;
  ScalarVolume across;  // largest-magnitude Hessian eigenvalue on GM
  double c_used = 0.0;
};

/// Plate measure that only requires the across-sheet eigenvalue to be negative.
double bright_plate_measure(const Vec3& eigenvalues, double structureness, double alpha, double beta, double c);

PlanarResponse planar_response(const ScalarVolume& image, const MaskVolume& gm, const PlanarFilterParams& params);

struct InitialOptions {
  double tau_p = 0.2;
  /// Keep only voxels crossed by the intensity ridge along the Laplace direction.
  bool thin_along_normal = true;
  std::size_t min_component = 5;
  /// Voxels within this many 26-steps of WM or the pial/fissure boundary are removed.
  int erosion_depth = 2;
};

/// Threshold, drop voxels 26-adjacent to WM or pial/fissure voxels, drop
/// small components. Throws a stage error when nothing survives.
MaskVolume initial_purkinje(const PlanarResponse& planar, const thickness::ThicknessBundle& bundle,
                            const MaskVolume& wm, const InitialOptions& options = {});

struct ExtrapolationOptions {
  int levels = 10;
  double sigma_max = 15.0;
  double sigma_min = 1.0;
  double tau_lambda = 0.05;
  double mass_threshold = 1e-6;
};

/// Sigma (voxels) for each smoothing level: geometric from sigma_max down to sigma_min.
std::vector<double> level_sigmas(const ExtrapolationOptions& options);

struct Extrapolation {
  ScalarVolume r_wm;     // D_WM / T_GM on the GM domain
  ScalarVolume r_p;      // r_wm restricted to M_P0
  ScalarVolume r_p_s;    // multi-level smoothed estimate
  ScalarVolume lambda;   // |r_p_s - r_wm|, 0 on M_P0, 1 where never reached
  MaskVolume known;      // voxels that received an estimate
  std::vector<std::size_t> known_counts;  // size of the known set after each level
  MaskVolume lambda_min;
  MaskVolume m_pf;
};

Extrapolation extrapolate_purkinje(const MaskVolume& m_p0, const thickness::ThicknessBundle& bundle,
                                   const ExtrapolationOptions& options = {});

struct SublayerSample {
  Index3 voxel;
  double t_gran = 0.0;
  double t_mol = 0.0;
  double t_gm = 0.0;
};

/// D_WM, D_Pial and T_GM restricted to the Purkinje voxels.
std::vector<SublayerSample> sublayer_thickness(const MaskVolume& m_pf, const thickness::ThicknessBundle& bundle);

}  // namespace laminar::purkinje
