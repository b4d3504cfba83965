#include "laminar/purkinje.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "laminar/grid.hpp"
#include "laminar/parallel.hpp"

namespace laminar::purkinje {

namespace {

double plate_shape(const Vec3& ev, double structureness, double alpha, double beta, double c) {
  const double l1 = ev[0], l2 = ev[1], l3 = ev[2];
  if (l3 == 0.0) return 0.0;
  const double ra = std::abs(l2) / std::abs(l3);
  const double denom = std::sqrt(std::abs(l2 * l3));
  double rb = 0.0;
  if (denom > 0.0) {
    rb = std::abs(l1) / denom;
  } else if (l1 != 0.0) {
    return 0.0;
  }
  return std::exp(-ra * ra / (2.0 * alpha * alpha)) * std::exp(-rb * rb / (2.0 * beta * beta)) *
         (1.0 - std::exp(-structureness * structureness / (2.0 * c * c)));
}

}  // namespace

double planar_measure(const Vec3& ev, double structureness, double alpha, double beta, double c) {
  if (ev[1] > 0.0 || ev[2] > 0.0) return 0.0;
  return plate_shape(ev, structureness, alpha, beta, c);
}

double bright_plate_measure(const Vec3& ev, double structureness, double alpha, double beta, double c) {
  if (ev[2] >= 0.0) return 0.0;
  return plate_shape(ev, structureness, alpha, beta, c);
}

PlanarResponse planar_response(const ScalarVolume& image, const MaskVolume& gm, const PlanarFilterParams& params) {
  require_same_geometry(image, gm, "planar_response gm");
  if (!(params.alpha > 0.0) || !(params.beta > 0.0)) fail(ErrorKind::parameter, "alpha and beta must be positive");
  const auto h = grid::hessian_eigen(image, params.scale_mm, &gm);
  PlanarResponse out{ScalarVolume(image.geometry()), ScalarVolume(image.geometry()), ScalarVolume(image.geometry()), params.c};

  if (!(out.c_used > 0.0)) {
    double peak = 0.0;
    for (std::size_t i = 0; i < gm.size(); ++i) {
      if (gm[i]) peak = std::max(peak, h.frobenius[i]);
    }
    out.c_used = 0.5 * peak;
  }
  if (!(out.c_used > 0.0)) return out;  // flat image: no structure anywhere
  parallel_for(gm.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if (!gm[i]) continue;
      out.response[i] = planar_measure(h.eigenvalues[i], h.frobenius[i], params.alpha, params.beta, out.c_used);
      out.across[i] = h.eigenvalues[i][2];
      out.ridge[i] = bright_plate_measure(h.eigenvalues[i], h.frobenius[i], params.alpha, params.beta, out.c_used);
    }
  });
  return out;
}

namespace {

MaskVolume dilate_candidates(const MaskVolume& above, const PlanarResponse& planar,
                             const thickness::ThicknessBundle& bundle, double tau) {
  MaskVolume near = grid::morphology(above, grid::MorphOp::dilate, 26);
  for (std::size_t i = 0; i < near.size(); ++i) {
    near[i] = (near[i] && bundle.domain[i] && planar.ridge[i] >= tau) ? 1 : 0;
  }
  return near;
}

bool sample(const ScalarVolume& v, const Vec3& p, double& out) {
  const auto& d = v.dims();
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= 0.0) || p[a] > d[a] - 1) return false;
  }
  out = grid::trilinear_sample(v, p);
  return true;
}

MaskVolume ridge_voxels(const PlanarResponse& planar, const thickness::ThicknessBundle& bundle,
                        const MaskVolume& candidates) {
  const auto& g = candidates.geometry();
  const ScalarVolume& f = planar.across;
  MaskVolume out(g);
  parallel_for(g.voxel_count(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if (!candidates[i]) continue;
      const Vec3& n = bundle.vhat.direction[i];
      const double len = norm(n);
      if (!(len > 0.5)) continue;
      Vec3 u{};  // index-space direction
      double reach = 0.0;
      for (int a = 0; a < 3; ++a) {
        u[a] = n[a] / len / g.spacing[a];
        reach += 0.5 * std::abs(n[a] / len) * g.spacing[a];
      }
      const double step = 1.0 / norm(u);  // mm per one-voxel index step
      const Index3 c = g.coords(i);
      // Samples at -2..2 steps along the normal; the ridge is where the
      // directional derivative of the across-sheet eigenvalue turns positive.
      std::array<double, 5> fs{};
      bool ok = true;
      for (int k = -2; k <= 2 && ok; ++k) {
        Vec3 p{};
        for (int a = 0; a < 3; ++a) p[a] = c[a] + k * step * u[a];
        ok = sample(f, p, fs[static_cast<std::size_t>(k + 2)]);
      }
      if (!ok) continue;
      const double gm1 = fs[2] - fs[0];
      const double g0 = fs[3] - fs[1];
      const double gp1 = fs[4] - fs[2];
      bool hit = false;
      if (g0 == 0.0) {
        hit = gm1 < 0.0 || gp1 > 0.0;
      } else if (g0 < 0.0 && gp1 > 0.0) {
        hit = step * g0 / (g0 - gp1) <= reach;
      } else if (g0 > 0.0 && gm1 < 0.0) {
        hit = -step * g0 / (g0 - gm1) > -reach;
      }
      out[i] = hit ? 1 : 0;
    }
  });
  return out;
}

}  // namespace

MaskVolume initial_purkinje(const PlanarResponse& planar, const thickness::ThicknessBundle& bundle,
                            const MaskVolume& wm, const InitialOptions& options) {
  const ScalarVolume& response = planar.response;
  require_same_geometry(response, bundle.domain, "initial_purkinje");
  require_same_geometry(response, planar.ridge, "initial_purkinje ridge");
  require_same_geometry(response, wm, "initial_purkinje wm");
  const auto& g = response.geometry();
  MaskVolume above(g);
  for (std::size_t i = 0; i < response.size(); ++i) {
    above[i] = (bundle.domain[i] && response[i] >= options.tau_p) ? 1 : 0;
  }
  MaskVolume seeds = above;
  if (options.thin_along_normal) {
    // The strict sign gate removes one flank of a curved or noisy sheet, so
    // the sheet is located on the across-sheet curvature instead. A voxel is
    // kept when the sub-voxel ridge position along V-hat falls inside the
    // voxel's extent along the normal (the digitisation the area estimate
    // assumes).
    seeds = ridge_voxels(planar, bundle, dilate_candidates(above, planar, bundle, options.tau_p));
  }
  // Conditional erosion: anything touching WM or the pial/fissure boundary goes.
  MaskVolume barrier = mask_or(wm, bundle.pial);
  for (int k = 0; k < options.erosion_depth; ++k) barrier = grid::morphology(barrier, grid::MorphOp::dilate, 26);
  seeds = mask_minus(seeds, barrier);
  seeds = grid::remove_small_components(seeds, 26, options.min_component);
  if (count_set(seeds) == 0) {
    fail(ErrorKind::stage, "no initial Purkinje voxels survive thresholding and boundary erosion");
  }
  return seeds;
}

std::vector<double> level_sigmas(const ExtrapolationOptions& o) {
  if (o.levels < 1 || !(o.sigma_max > 0.0) || !(o.sigma_min > 0.0)) {
    fail(ErrorKind::parameter, "extrapolation needs levels >= 1 and positive sigmas");
  }
  std::vector<double> s(static_cast<std::size_t>(o.levels));
  for (int i = 0; i < o.levels; ++i) {
    const double t = o.levels == 1 ? 0.0 : static_cast<double>(i) / (o.levels - 1);
    s[static_cast<std::size_t>(i)] = o.sigma_max * std::pow(o.sigma_min / o.sigma_max, t);
  }
  return s;
}

Extrapolation extrapolate_purkinje(const MaskVolume& m_p0, const thickness::ThicknessBundle& bundle,
                                   const ExtrapolationOptions& options) {
  require_same_geometry(m_p0, bundle.domain, "extrapolate_purkinje");
  const auto& g = m_p0.geometry();
  const auto& domain = bundle.domain;
  if (count_set(mask_and(m_p0, domain)) == 0) fail(ErrorKind::stage, "initial Purkinje mask is empty");
  const auto sigmas = level_sigmas(options);

  Extrapolation r;
  r.r_wm = ScalarVolume(g);
  r.r_p = ScalarVolume(g);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (!domain[i]) continue;
    const double t = bundle.t_gm[i];
    r.r_wm[i] = t > 0.0 ? std::clamp(bundle.streams.d_wm[i] / t, 0.0, 1.0) : 0.0;
    if (m_p0[i]) r.r_p[i] = r.r_wm[i];
  }

  r.known = mask_and(m_p0, domain);
  r.r_p_s = r.r_p;
  for (double sigma : sigmas) {
    ScalarVolume weight;
    const auto smooth = grid::gaussian_smooth(r.r_p_s, sigma, r.known, &weight);
    MaskVolume fresh(g);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      if (domain[i] && !r.known[i] && weight[i] > options.mass_threshold) {
        r.r_p_s[i] = smooth[i];
        fresh[i] = 1;
      }
    }
    r.known = mask_or(r.known, fresh);
    r.known_counts.push_back(count_set(r.known));
  }

  r.lambda = ScalarVolume(g);
  MaskVolume candidates(g);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (!domain[i] || m_p0[i]) continue;
    if (r.known[i]) {
      r.lambda[i] = std::abs(r.r_p_s[i] - r.r_wm[i]);
      candidates[i] = r.lambda[i] < options.tau_lambda;
    } else {
      r.lambda[i] = 1.0;
    }
  }
  r.lambda_min = grid::directional_extrema(r.lambda, bundle.vhat.direction, candidates, domain,
                                           grid::Extremum::minimum, grid::StepLength::voxel_extent);
  r.m_pf = mask_or(mask_and(m_p0, domain), r.lambda_min);
  return r;
}

std::vector<SublayerSample> sublayer_thickness(const MaskVolume& m_pf, const thickness::ThicknessBundle& bundle) {
  require_same_geometry(m_pf, bundle.domain, "sublayer_thickness");
  const auto& g = m_pf.geometry();
  std::vector<SublayerSample> out;
  for (std::size_t i = 0; i < m_pf.size(); ++i) {
    if (!m_pf[i]) continue;
    if (!bundle.domain[i]) {
      const Index3 c = g.coords(i);
      fail(ErrorKind::data, "Purkinje voxel " + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                                std::to_string(c[2]) + " lies outside grey matter");
    }
    out.push_back({g.coords(i), bundle.streams.d_wm[i], bundle.streams.d_pial[i], bundle.t_gm[i]});
  }
  return out;
}

}  // namespace laminar::purkinje
