#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laminar/volume.hpp"

namespace laminar::phantom {

enum class Kind { slab, spherical_shell, folded_sheet };

struct Intensities {
  double background = 0.0;
  double wm = 50.0;
  double granular = 100.0;
  double purkinje = 200.0;
  double molecular = 130.0;
};

struct PhantomSpec {
  Kind kind = Kind::slab;
  Index3 dims{64, 64, 80};
  Vec3 spacing{0.1, 0.1, 0.1};
  double thickness_mm = 4.0;
  double mid_fraction = 0.4;
  double inner_radius_mm = 10.0;   // spherical_shell
  double wm_depth_mm = -1.0;       // slab / folded: WM top height; < 0 centres the tissue
  double fold_amplitude_mm = 0.0;  // folded_sheet
  double fold_wavelength_mm = 1.0;
  double fissure_depth_mm = 0.0;   // folded_sheet: depth of the cleft cut from the pial side
  double fissure_width_voxels = 0.5;
  double purkinje_width_voxels = 1.0;
  Intensities intensities;
  double noise_sigma = 1.0;
  double pv_sigma_voxels = 0.5;
  std::uint64_t seed = 1;
  int regions = 2;
  int supersample = 3;

  /// Throws a parameter error for an inconsistent or geometrically impossible spec.
  void validate() const;

  std::string to_json() const;
  static PhantomSpec from_json(const std::string& text);
};

struct Truth {
  MaskVolume wm;
  MaskVolume gm;
  MaskVolume mid_layer;  // voxels whose cube meets the Purkinje surface
  MaskVolume fissure;
  ScalarVolume t_gm;     // analytic thickness maps on GM (mm)
  ScalarVolume t_gran;
  ScalarVolume t_mol;
  ScalarVolume depth;    // signed distance from the WM surface (mm), positive into GM
  VectorField normal;    // unit normal of the laminae
  double tiv_mm3 = 0.0;
};

struct Phantom {
  ScalarVolume image;
  MaskVolume brain_mask;            // WM u GM dilated by one voxel
  std::vector<ScalarVolume> priors; // background, WM, inner GM, outer GM
  LabelVolume parcellation;         // regions split along x inside the brain mask
  Truth truth;
};

Phantom generate(const PhantomSpec& spec);

/// Writes image.nii, mask.nii, prior_<k>.nii, parcellation.nii, truth_*.nii and truth.json.
void write_phantom(const Phantom& p, const PhantomSpec& spec, const std::string& dir);

}  // namespace laminar::phantom
