#pragma once

#include <optional>
#include <vector>

#include "laminar/volume.hpp"

namespace laminar::grid {

enum class MorphOp { erode, dilate };

/// Neighbourhood offsets for 6-, 18- or 26-connectivity (centre excluded).
const std::vector<Index3>& neighbourhood(int connectivity);

/// Normalised 1-D Gaussian taps with radius ceil(4 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable truncated-Gaussian smoothing with replicate-edge padding.
ScalarVolume gaussian_smooth(const ScalarVolume& v, double sigma_voxels);

/// Per-axis sigma (in voxels) variant used by the Hessian.
ScalarVolume gaussian_smooth(const ScalarVolume& v, const Vec3& sigma_voxels);

/// Normalised convolution smooth(v*mask)/smooth(mask). Voxels where the
/// smoothed mask weight is <= 1e-12 are left at 0; `weight_out` receives the
/// smoothed mask so callers can tell defined voxels apart.
ScalarVolume gaussian_smooth(const ScalarVolume& v, double sigma_voxels, const MaskVolume& support,
                             ScalarVolume* weight_out = nullptr);

/// Central differences in mm^-1, one-sided on the faces.
VectorField gradient(const ScalarVolume& v);

struct HessianEigen {
  Geometry geometry;
  /// (l1, l2, l3) sorted so that |l1| <= |l2| <= |l3|.
  std::vector<Vec3> eigenvalues;
  /// Unit eigenvector of l3, sign chosen so the z component is nonnegative.
  std::vector<Vec3> major_vector;
  /// Frobenius norm of the Hessian at each voxel.
  std::vector<double> frobenius;
};

/// Gaussian-scale Hessian eigen-decomposition. `scale_mm` converts to a per-axis
/// sigma of scale_mm / spacing voxels, each of which must be >= 0.25. When
/// `where` is given, voxels outside it are left at zero.
HessianEigen hessian_eigen(const ScalarVolume& v, double scale_mm, const MaskVolume* where = nullptr);

/// Sorted eigen-decomposition of one symmetric 3x3 matrix given as
/// (xx, yy, zz, xy, xz, yz).
void symmetric_eigen(const std::array<double, 6>& h, Vec3& eigenvalues, Vec3& major_vector);

/// Trilinear interpolation at a continuous voxel coordinate. Throws a domain
/// error outside [0, dim-1].
double trilinear_sample(const ScalarVolume& v, const Vec3& p);

MaskVolume morphology(const MaskVolume& m, MorphOp op, int connectivity,
                      const MaskVolume* condition = nullptr);

struct Components {
  LabelVolume labels;             // 0 = background, components numbered from 1
  std::vector<std::size_t> sizes; // sizes[k] is the size of label k+1
};

Components connected_components(const MaskVolume& m, int connectivity);

enum class Extremum { maximum, minimum };
enum class StepLength {
  unit,          // one voxel along the direction
  voxel_extent,  // the voxel's extent along the direction, sum |d_a|
};

/// Keeps candidate voxels whose value is an extremum along +-dir: both samples
/// at x +- step*dir (trilinear, voxel coordinates) must be defined and no
/// better than v(x), and at least one strictly worse. A sample is defined only
/// when every trilinear corner with nonzero weight lies inside `sample_domain`
/// and holds a finite value. Directions are given in physical space.
MaskVolume directional_extrema(const ScalarVolume& v, const VectorField& dir, const MaskVolume& candidates,
                               const MaskVolume& sample_domain, Extremum kind, StepLength step);

/// Drops components smaller than `min_size` voxels.
MaskVolume remove_small_components(const MaskVolume& m, int connectivity, std::size_t min_size);

}  // namespace laminar::grid
