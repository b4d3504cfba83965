#pragma once

#include "laminar/volume.hpp"

namespace laminar::thickness {

struct LaplaceResult {
  ScalarVolume psi;  // 0 on the WM band, 1 on the pial band, harmonic in between
  int iterations = 0;
  bool converged = false;
  double last_update = 0.0;
};

/// Pure Jacobi iteration of the 7-point finite-volume Laplacian on
/// gm \ (wm_band u pial). Dirichlet boundaries sit on the face between a band
/// voxel and its GM neighbour (half a voxel from the GM centre); faces to any
/// other voxel are insulated.
LaplaceResult solve_laplace(const MaskVolume& gm, const MaskVolume& wm_band, const MaskVolume& pial,
                            double tol = 1e-6, int max_iter = 5000);

struct GradientField {
  VectorField direction;  // unit vectors on the domain
  MaskVolume degenerate;  // |grad psi| <= 1e-12
};

GradientField normalize_gradient(const ScalarVolume& psi, const MaskVolume& domain, const MaskVolume& wm_band,
                                 const MaskVolume& pial);

struct StreamlineResult {
  ScalarVolume d_wm;
  ScalarVolume d_pial;
  MaskVolume flagged;  // voxels with no upwind support, filled by neighbour average
  int sweeps = 0;
  bool converged = false;
};

/// Upwind Eulerian solve of grad(D_WM).V = 1 and grad(D_Pial).(-V) = 1 with
/// D = 0 on the respective boundary faces, using alternating-direction sweeps.
StreamlineResult streamline_lengths(const VectorField& vhat, const MaskVolume& domain, const MaskVolume& wm_band,
                                    const MaskVolume& pial, double tol = 1e-6, int max_iter = 500);

/// Voxelwise D_WM + D_Pial over the domain, 0 elsewhere.
ScalarVolume assemble_thickness(const ScalarVolume& d_wm, const ScalarVolume& d_pial, const MaskVolume& domain);

struct ThicknessOptions {
  double laplace_tol = 1e-6;
  int laplace_max_iter = 5000;
  double stream_tol = 1e-6;
  int stream_max_iter = 500;
};

struct ThicknessBundle {
  MaskVolume domain;   // GM minus fissure voxels
  MaskVolume wm_band;
  MaskVolume pial;
  LaplaceResult laplace;
  GradientField vhat;
  StreamlineResult streams;
  ScalarVolume t_gm;

  bool converged() const { return laplace.converged && streams.converged; }
};

/// Boundary bands and solver domain only; the solver fields are left empty.
ThicknessBundle prepare_bundle(const MaskVolume& gm, const MaskVolume& wm, const MaskVolume& pial);

ThicknessBundle compute_thickness(const MaskVolume& gm, const MaskVolume& wm, const MaskVolume& pial,
                                  const ThicknessOptions& options = {});

}  // namespace laminar::thickness
