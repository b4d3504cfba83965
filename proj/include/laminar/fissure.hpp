#pragma once

#include <vector>

#include "laminar/volume.hpp"

namespace laminar::fissure {

/// Gaussian-smoothed image clamped below at 1e-6 * max.
ScalarVolume speed_map(const ScalarVolume& image, double sigma_voxels = 1.5);

struct GeodesicDistance {
  ScalarVolume distance;  // mm; +inf where unreachable
  MaskVolume unreachable; // domain voxels the front never reached
  std::vector<double> acceptance_order; // distance of each voxel as it was frozen
};

/// First-order fast marching for F |grad D| = 1. Source voxels are frozen at
/// zero and may lie outside `domain`; the front only enters domain voxels.
/// Voxels in the 26-neighbourhood of a source start from their exact
/// straight-line travel time.
GeodesicDistance solve_eikonal(const ScalarVolume& speed, const MaskVolume& source, const MaskVolume& domain);

/// Gradient of D restricted to `domain`. Along an axis where D has a strict
/// crease (a local extremum) the backward difference replaces the vanishing
/// central one, so ridge voxels keep a direction across the ridge.
VectorField ridge_gradient(const ScalarVolume& D, const MaskVolume& domain);

/// Local maxima of D along its own gradient direction.
MaskVolume directional_maxima(const ScalarVolume& D, const MaskVolume& domain);

/// Removes topologically simple candidate voxels that have a candidate
/// 6-neighbour along the dominant axis of the D gradient, visiting voxels in
/// descending D order until nothing changes.
MaskVolume thin_to_sheet(const MaskVolume& candidates, const ScalarVolume& D, const MaskVolume& domain);

/// True if removing the centre of a 3x3x3 patch (index x + 3y + 9z) keeps one
/// 26-connected foreground component and one 6-connected background component.
bool is_simple_point(const std::array<bool, 27>& patch);

/// Fissures plus background voxels 6-adjacent to GM but not to WM.
MaskVolume build_pial(const MaskVolume& gm, const MaskVolume& wm, const MaskVolume& fissures);

/// WM voxels 6-adjacent to GM.
MaskVolume wm_boundary(const MaskVolume& wm, const MaskVolume& gm);

struct FissureResult {
  ScalarVolume speed;
  GeodesicDistance geodesic;
  MaskVolume candidates;
  MaskVolume fissures;
  MaskVolume pial;
};

FissureResult extract_fissures(const ScalarVolume& image, const MaskVolume& wm, const MaskVolume& gm,
                               double sigma_voxels = 1.5);

}  // namespace laminar::fissure
