#include "laminar/thickness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "laminar/fissure.hpp"
#include "laminar/grid.hpp"
#include "laminar/parallel.hpp"

namespace laminar::thickness {

namespace {

enum class Kind : std::uint8_t { none, domain, wm, pial };

Kind classify(const MaskVolume& domain, const MaskVolume& wm_band, const MaskVolume& pial, const Geometry& g,
              const Index3& n) {
  if (!g.contains(n[0], n[1], n[2])) return Kind::none;
  const std::size_t j = g.offset(n[0], n[1], n[2]);
  if (pial[j]) return Kind::pial;
  if (wm_band[j]) return Kind::wm;
  if (domain[j]) return Kind::domain;
  return Kind::none;
}

// Hop distance through the domain from a band, used only as a starting guess.
std::vector<double> hop_distance(const MaskVolume& domain, const MaskVolume& band) {
  const auto& g = domain.geometry();
  std::vector<double> d(domain.size(), std::numeric_limits<double>::infinity());
  std::deque<std::size_t> q;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (band[i]) {
      d[i] = 0.0;
      q.push_back(i);
    }
  }
  while (!q.empty()) {
    const std::size_t i = q.front();
    q.pop_front();
    const Index3 c = g.coords(i);
    for (const auto& o : grid::neighbourhood(6)) {
      const int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
      if (!g.contains(x, y, z)) continue;
      const std::size_t j = g.offset(x, y, z);
      if (!domain[j] || band[j] || d[j] <= d[i] + 1.0) continue;
      d[j] = d[i] + 1.0;
      q.push_back(j);
    }
  }
  return d;
}

void check_topology(const MaskVolume& domain, const MaskVolume& wm_band, const MaskVolume& pial) {
  const auto& g = domain.geometry();
  const auto cc = grid::connected_components(domain, 6);
  std::vector<std::uint8_t> touches_wm(cc.sizes.size(), 0), touches_pial(cc.sizes.size(), 0);
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const auto l = cc.labels[i];
    if (l == 0) continue;
    const Index3 c = g.coords(i);
    for (const auto& o : grid::neighbourhood(6)) {
      const Index3 n{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
      const Kind k = classify(domain, wm_band, pial, g, n);
      if (k == Kind::wm) touches_wm[l - 1] = 1;
      if (k == Kind::pial) touches_pial[l - 1] = 1;
    }
  }
  for (std::size_t k = 0; k < cc.sizes.size(); ++k) {
    if (touches_wm[k] && touches_pial[k]) continue;
    std::size_t first = 0;
    while (cc.labels[first] != static_cast<std::int32_t>(k + 1)) ++first;
    const Index3 c = g.coords(first);
    fail(ErrorKind::topology, "GM component " + std::to_string(k + 1) + " (" + std::to_string(cc.sizes[k]) +
                                  " voxels, first at " + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                                  std::to_string(c[2]) + ") does not reach " +
                                  (touches_wm[k] ? "the pial boundary" : "the WM boundary"));
  }
}

}  // namespace

LaplaceResult solve_laplace(const MaskVolume& gm, const MaskVolume& wm_band, const MaskVolume& pial, double tol,
                            int max_iter) {
  require_same_geometry(gm, wm_band, "laplace wm band");
  require_same_geometry(gm, pial, "laplace pial");
  if (!(tol > 0.0) || max_iter < 0) fail(ErrorKind::parameter, "laplace tol must be positive and max_iter >= 0");
  const auto& g = gm.geometry();
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (wm_band[i] && pial[i]) fail(ErrorKind::data, "WM and pial boundary sets overlap");
  }
  const MaskVolume domain = mask_minus(mask_minus(gm, wm_band), pial);
  check_topology(domain, wm_band, pial);

  // Compact stencil: for every domain voxel, neighbour slots (index into the
  // compact array or -1 for a Dirichlet value) with finite-volume weights.
  std::vector<std::size_t> voxels;
  std::vector<std::int64_t> compact(gm.size(), -1);
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (domain[i]) {
      compact[i] = static_cast<std::int64_t>(voxels.size());
      voxels.push_back(i);
    }
  }
  const std::size_t n = voxels.size();
  std::vector<std::array<std::int64_t, 6>> nbr(n);
  std::vector<std::array<double, 6>> weight(n);
  std::vector<double> fixed(n, 0.0), total(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const Index3 c = g.coords(voxels[k]);
    int slot = 0;
    nbr[k].fill(-1);
    weight[k].fill(0.0);
    for (int a = 0; a < 3; ++a) {
      const double h = g.spacing[a];
      for (int s : {-1, 1}) {
        Index3 q = c;
        q[a] += s;
        const Kind kind = classify(domain, wm_band, pial, g, q);
        if (kind == Kind::none) continue;
        if (kind == Kind::domain) {
          nbr[k][slot] = compact[g.offset(q[0], q[1], q[2])];
          weight[k][slot] = 1.0 / (h * h);
          ++slot;
        } else {
          const double w = 2.0 / (h * h);
          if (kind == Kind::pial) fixed[k] += w;
          total[k] += w;
        }
      }
    }
    for (int s = 0; s < slot; ++s) total[k] += weight[k][s];
  }

  const auto dw = hop_distance(domain, wm_band);
  const auto dp = hop_distance(domain, pial);
  std::vector<double> cur(n), next(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = dw[voxels[k]], b = dp[voxels[k]];
    cur[k] = (std::isfinite(a) && std::isfinite(b)) ? (a - 0.5) / (a + b - 1.0) : 0.5;
  }

  LaplaceResult out;
  out.psi = ScalarVolume(g);
  int it = 0;
  double update = std::numeric_limits<double>::infinity();
  std::vector<double> local(n == 0 ? 1 : n, 0.0);
  while (it < max_iter) {
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) {
        double acc = fixed[k];
        for (int s = 0; s < 6; ++s) {
          if (nbr[k][s] >= 0) acc += weight[k][s] * cur[static_cast<std::size_t>(nbr[k][s])];
        }
        next[k] = acc / total[k];
        local[k] = std::abs(next[k] - cur[k]);
      }
    });
    update = n ? *std::max_element(local.begin(), local.end()) : 0.0;
    std::swap(cur, next);
    ++it;
    if (update < tol) break;
  }
  out.iterations = it;
  out.last_update = n ? update : 0.0;
  out.converged = n == 0 || update < tol;
  for (std::size_t k = 0; k < n; ++k) out.psi[voxels[k]] = cur[k];
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (pial[i]) out.psi[i] = 1.0;
  }
  return out;
}

GradientField normalize_gradient(const ScalarVolume& psi, const MaskVolume& domain, const MaskVolume& wm_band,
                                 const MaskVolume& pial) {
  require_same_geometry(psi, domain, "normalize_gradient domain");
  const auto& g = psi.geometry();
  GradientField out{VectorField(g), MaskVolume(g)};
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (!domain[i]) continue;
    const Index3 c = g.coords(i);
    Vec3 grad{};
    for (int a = 0; a < 3; ++a) {
      double val[2] = {0.0, 0.0}, dist[2] = {0.0, 0.0};
      bool ok[2] = {false, false};
      for (int s = 0; s < 2; ++s) {
        Index3 q = c;
        q[a] += s == 0 ? -1 : 1;
        const Kind kind = classify(domain, wm_band, pial, g, q);
        if (kind == Kind::none) continue;
        ok[s] = true;
        if (kind == Kind::domain) {
          val[s] = psi.at(q[0], q[1], q[2]);
          dist[s] = g.spacing[a];
        } else {
          val[s] = kind == Kind::pial ? 1.0 : 0.0;
          dist[s] = 0.5 * g.spacing[a];
        }
      }
      if (ok[0] && ok[1]) {
        grad[a] = (val[1] - val[0]) / (dist[0] + dist[1]);
      } else if (ok[0]) {
        grad[a] = (psi[i] - val[0]) / dist[0];
      } else if (ok[1]) {
        grad[a] = (val[1] - psi[i]) / dist[1];
      }
    }
    const double len = norm(grad);
    if (len > 1e-12) {
      out.direction[i] = {grad[0] / len, grad[1] / len, grad[2] / len};
    } else {
      out.degenerate[i] = 1;
    }
  }
  return out;
}

namespace {

// One family of streamline lengths. `sign` = +1 integrates along V from the
// `source` band, -1 along -V.
void solve_lengths(const VectorField& vhat, const MaskVolume& domain, const MaskVolume& source,
                   const MaskVolume& opposite, double sign, double tol, int max_iter, ScalarVolume& D,
                   MaskVolume& flagged, int& sweeps, bool& converged) {
  const auto& g = domain.geometry();
  D = ScalarVolume(g);
  std::vector<std::size_t> voxels;
  std::vector<std::int64_t> slot(domain.size(), -1);
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (domain[i]) {
      slot[i] = static_cast<std::int64_t>(voxels.size());
      voxels.push_back(i);
    }
  }
  // Per voxel: up to three upwind contributions (index or -1 for the source face).
  struct Upwind {
    std::array<std::int64_t, 3> idx{-1, -1, -1};
    std::array<double, 3> w{0.0, 0.0, 0.0};
    double total = 0.0;
  };
  std::vector<Upwind> stencil(voxels.size());
  std::vector<std::uint8_t> orphan(voxels.size(), 0);
  for (std::size_t k = 0; k < voxels.size(); ++k) {
    const std::size_t i = voxels[k];
    const Index3 c = g.coords(i);
    auto& st = stencil[k];
    for (int a = 0; a < 3; ++a) {
      const double comp = sign * vhat[i][a];
      if (comp == 0.0) continue;
      Index3 q = c;
      q[a] += comp > 0.0 ? -1 : 1;
      if (!g.contains(q[0], q[1], q[2])) continue;
      const std::size_t j = g.offset(q[0], q[1], q[2]);
      if (source[j]) {
        st.w[a] = std::abs(comp) / (0.5 * g.spacing[a]);
        st.idx[a] = -1;
      } else if (domain[j] && !opposite[j]) {
        st.w[a] = std::abs(comp) / g.spacing[a];
        st.idx[a] = static_cast<std::int64_t>(j);
      } else {
        continue;
      }
      st.total += st.w[a];
    }
    orphan[k] = st.total <= 0.0;
  }

  static const int orders[8][3] = {{1, 1, 1}, {-1, -1, -1}, {-1, 1, 1}, {1, -1, -1},
                                   {1, -1, 1}, {-1, 1, -1}, {1, 1, -1}, {-1, -1, 1}};
  converged = false;
  sweeps = 0;
  while (sweeps < max_iter) {
    const int* o = orders[sweeps % 8];
    double change = 0.0;
    for (int zz = 0; zz < g.dims[2]; ++zz) {
      const int z = o[2] > 0 ? zz : g.dims[2] - 1 - zz;
      for (int yy = 0; yy < g.dims[1]; ++yy) {
        const int y = o[1] > 0 ? yy : g.dims[1] - 1 - yy;
        for (int xx = 0; xx < g.dims[0]; ++xx) {
          const int x = o[0] > 0 ? xx : g.dims[0] - 1 - xx;
          const std::size_t i = g.offset(x, y, z);
          if (!domain[i]) continue;
          const auto k = static_cast<std::size_t>(slot[i]);
          double value = 0.0;
          if (orphan[k]) {
            double s = 0.0;
            int m = 0;
            for (const auto& off : grid::neighbourhood(6)) {
              const int a = x + off[0], b = y + off[1], c = z + off[2];
              if (!g.contains(a, b, c)) continue;
              const std::size_t j = g.offset(a, b, c);
              if (domain[j] && !orphan[static_cast<std::size_t>(slot[j])]) {
                s += D[j];
                ++m;
              }
            }
            value = m ? s / m : 0.0;
          } else {
            const auto& st = stencil[k];
            double acc = 1.0;
            for (int a = 0; a < 3; ++a) {
              if (st.w[a] == 0.0) continue;
              if (st.idx[a] >= 0) acc += st.w[a] * D[static_cast<std::size_t>(st.idx[a])];
            }
            value = acc / st.total;
          }
          change = std::max(change, std::abs(value - D[i]));
          D[i] = value;
        }
      }
    }
    ++sweeps;
    if (change < tol) {
      converged = true;
      break;
    }
  }
  for (std::size_t k = 0; k < voxels.size(); ++k) {
    if (orphan[k]) flagged[voxels[k]] = 1;
  }
}

}  // namespace

StreamlineResult streamline_lengths(const VectorField& vhat, const MaskVolume& domain, const MaskVolume& wm_band,
                                    const MaskVolume& pial, double tol, int max_iter) {
  require_same_geometry(domain, vhat, "streamline direction");
  require_same_geometry(domain, wm_band, "streamline wm band");
  require_same_geometry(domain, pial, "streamline pial");
  if (!(tol > 0.0) || max_iter < 0) fail(ErrorKind::parameter, "streamline tol must be positive and max_iter >= 0");
  StreamlineResult out;
  out.flagged = MaskVolume(domain.geometry());
  int s1 = 0, s2 = 0;
  bool c1 = false, c2 = false;
  solve_lengths(vhat, domain, wm_band, pial, 1.0, tol, max_iter, out.d_wm, out.flagged, s1, c1);
  solve_lengths(vhat, domain, pial, wm_band, -1.0, tol, max_iter, out.d_pial, out.flagged, s2, c2);
  out.sweeps = std::max(s1, s2);
  out.converged = c1 && c2;
  return out;
}

ScalarVolume assemble_thickness(const ScalarVolume& d_wm, const ScalarVolume& d_pial, const MaskVolume& domain) {
  require_same_geometry(d_wm, d_pial, "assemble_thickness");
  require_same_geometry(d_wm, domain, "assemble_thickness domain");
  ScalarVolume t(d_wm.geometry());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (domain[i]) t[i] = d_wm[i] + d_pial[i];
  }
  return t;
}

ThicknessBundle prepare_bundle(const MaskVolume& gm, const MaskVolume& wm, const MaskVolume& pial) {
  require_same_geometry(gm, wm, "thickness wm");
  require_same_geometry(gm, pial, "thickness pial");
  ThicknessBundle b;
  b.wm_band = fissure::wm_boundary(wm, gm);
  b.pial = mask_minus(pial, wm);
  b.domain = mask_minus(mask_minus(gm, b.pial), b.wm_band);
  return b;
}

ThicknessBundle compute_thickness(const MaskVolume& gm, const MaskVolume& wm, const MaskVolume& pial,
                                  const ThicknessOptions& options) {
  require_same_geometry(gm, wm, "thickness wm");
  require_same_geometry(gm, pial, "thickness pial");
  ThicknessBundle b = prepare_bundle(gm, wm, pial);
  b.laplace = solve_laplace(b.domain, b.wm_band, b.pial, options.laplace_tol, options.laplace_max_iter);
  b.vhat = normalize_gradient(b.laplace.psi, b.domain, b.wm_band, b.pial);
  b.streams = streamline_lengths(b.vhat.direction, b.domain, b.wm_band, b.pial, options.stream_tol,
                                 options.stream_max_iter);
  b.t_gm = assemble_thickness(b.streams.d_wm, b.streams.d_pial, b.domain);
  return b;
}

}  // namespace laminar::thickness
