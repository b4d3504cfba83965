#include "laminar/fissure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include <Eigen/Dense>

#include "laminar/grid.hpp"

namespace laminar::fissure {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Three lattice directions used together in one upwind update. Besides the axis
// triad, each axis pairs with the two face diagonals of the plane normal to it.
struct Stencil {
  std::array<Index3, 3> offset;
  std::array<double, 3> length{};               // physical step along each direction (mm)
  std::array<Eigen::Matrix3d, 8> inverse_gram;  // per subset of directions, zero-padded
};

std::vector<Stencil> make_stencils(const Vec3& spacing) {
  const std::array<std::array<Index3, 3>, 4> offsets{{
      {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}},
      {{{1, 0, 0}, {0, 1, 1}, {0, 1, -1}}},
      {{{0, 1, 0}, {1, 0, 1}, {1, 0, -1}}},
      {{{0, 0, 1}, {1, 1, 0}, {1, -1, 0}}},
  }};
  std::vector<Stencil> out;
  for (const auto& o : offsets) {
    Stencil st;
    st.offset = o;
    std::array<Eigen::Vector3d, 3> unit;
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d v(o[k][0] * spacing[0], o[k][1] * spacing[1], o[k][2] * spacing[2]);
      st.length[k] = v.norm();
      unit[k] = v / st.length[k];
    }
    for (int subset = 1; subset < 8; ++subset) {
      std::vector<int> idx;
      for (int k = 0; k < 3; ++k)
        if (subset >> k & 1) idx.push_back(k);
      const auto n = static_cast<Eigen::Index>(idx.size());
      Eigen::MatrixXd gram(n, n);
      for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index q = 0; q < n; ++q) gram(r, q) = unit[idx[r]].dot(unit[idx[q]]);
      const Eigen::MatrixXd inv = gram.inverse();
      st.inverse_gram[subset].setZero();
      for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index q = 0; q < n; ++q) st.inverse_gram[subset](idx[r], idx[q]) = inv(r, q);
    }
    out.push_back(st);
  }
  return out;
}

bool adjacent_to(const MaskVolume& m, const Geometry& g, const Index3& c, int connectivity) {
  for (const auto& o : grid::neighbourhood(connectivity)) {
    const int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
    if (g.contains(x, y, z) && m.at(x, y, z)) return true;
  }
  return false;
}

}  // namespace

ScalarVolume speed_map(const ScalarVolume& image, double sigma_voxels) {
  auto f = grid::gaussian_smooth(image, sigma_voxels);
  const double peak = *std::max_element(f.data().begin(), f.data().end());
  if (!(peak > 0.0)) fail(ErrorKind::data, "speed map is not positive anywhere (all-zero image?)");
  const double floor = 1e-6 * peak;
  for (auto& x : f.data()) x = std::max(x, floor);
  return f;
}

GeodesicDistance solve_eikonal(const ScalarVolume& speed, const MaskVolume& source, const MaskVolume& domain) {
  require_same_geometry(speed, source, "eikonal source");
  require_same_geometry(speed, domain, "eikonal domain");
  const auto& g = speed.geometry();
  if (count_set(source) == 0) fail(ErrorKind::data, "eikonal source is empty");

  GeodesicDistance out{ScalarVolume(g, kInf), MaskVolume(g), {}};
  auto& D = out.distance;
  std::vector<std::uint8_t> frozen(D.size(), 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

  auto in_front = [&](std::size_t i) { return domain[i] && !source[i]; };

  for (std::size_t i = 0; i < D.size(); ++i) {
    if (!source[i]) continue;
    D[i] = 0.0;
    frozen[i] = 1;
  }
  for (std::size_t i = 0; i < D.size(); ++i) {
    if (!source[i]) continue;
    const Index3 c = g.coords(i);
    for (const auto& o : grid::neighbourhood(26)) {
      const int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
      if (!g.contains(x, y, z)) continue;
      const std::size_t j = g.offset(x, y, z);
      if (!in_front(j)) continue;
      const double len = std::sqrt(std::pow(o[0] * g.spacing[0], 2) + std::pow(o[1] * g.spacing[1], 2) +
                                   std::pow(o[2] * g.spacing[2], 2));
      const double t = len / speed[j];
      if (t < D[j]) {
        D[j] = t;
        heap.push({t, j});
      }
    }
  }

  const auto stencils = make_stencils(g.spacing);

  // Upwind update of F|grad D| = 1 at voxel c: every stencil contributes the
  // solution built from its frozen neighbours, and the smallest causal value wins.
  auto solve_at = [&](const Index3& c, double f) {
    double result = kInf;
    const double rhs = 1.0 / (f * f);
    for (const auto& st : stencils) {
      std::array<double, 3> value{};
      std::array<double, 3> side{};
      int available = 0;
      for (int k = 0; k < 3; ++k) {
        double best = kInf;
        for (int s : {-1, 1}) {
          const int x = c[0] + s * st.offset[k][0], y = c[1] + s * st.offset[k][1], z = c[2] + s * st.offset[k][2];
          if (!g.contains(x, y, z)) continue;
          const std::size_t j = g.offset(x, y, z);
          if (frozen[j] && D[j] < best) {
            best = D[j];
            side[k] = s;
          }
        }
        value[k] = best;
        if (std::isfinite(best)) available |= 1 << k;
      }
      for (int subset = 1; subset < 8; ++subset) {
        if ((subset & available) != subset) continue;
        const auto& W = st.inverse_gram[subset];
        double a[3] = {}, b[3] = {};
        double highest = -kInf;
        for (int k = 0; k < 3; ++k) {
          if (!(subset >> k & 1)) continue;
          a[k] = 1.0 / st.length[k];
          b[k] = value[k] / st.length[k];
          highest = std::max(highest, value[k]);
        }
        double A = 0.0, B = 0.0, C = -rhs;
        for (int r = 0; r < 3; ++r)
          for (int q = 0; q < 3; ++q) {
            const double w = side[r] * side[q] * W(r, q);
            A += a[r] * w * a[q];
            B -= 2.0 * a[r] * w * b[q];
            C += b[r] * w * b[q];
          }
        const double disc = B * B - 4.0 * A * C;
        if (disc < 0.0) continue;
        const double cand = (-B + std::sqrt(disc)) / (2.0 * A);
        if (cand < highest || cand >= result) continue;
        // The recovered gradient must be a nonnegative combination of the
        // directions pointing from the upwind neighbours into this voxel.
        bool causal = true;
        for (int r = 0; r < 3 && causal; ++r) {
          if (!(subset >> r & 1)) continue;
          double coef = 0.0;
          for (int q = 0; q < 3; ++q) {
            if (subset >> q & 1) coef += side[r] * W(r, q) * side[q] * (cand - value[q]) / st.length[q];
          }
          causal = coef >= -1e-12;
        }
        if (causal) result = cand;
      }
    }
    return result;
  };

  while (!heap.empty()) {
    const auto [d, i] = heap.top();
    heap.pop();
    if (frozen[i] || d > D[i]) continue;
    frozen[i] = 1;
    out.acceptance_order.push_back(d);
    const Index3 c = g.coords(i);
    for (const auto& o : grid::neighbourhood(18)) {
      const Index3 n{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
      if (!g.contains(n[0], n[1], n[2])) continue;
      const std::size_t j = g.offset(n[0], n[1], n[2]);
      if (frozen[j] || !in_front(j)) continue;
      const double t = solve_at(n, speed[j]);
      if (t < D[j]) {
        D[j] = t;
        heap.push({t, j});
      }
    }
  }
  for (std::size_t i = 0; i < D.size(); ++i) {
    out.unreachable[i] = (domain[i] && !std::isfinite(D[i])) ? 1 : 0;
  }
  return out;
}

VectorField ridge_gradient(const ScalarVolume& D, const MaskVolume& domain) {
  require_same_geometry(D, domain, "ridge_gradient domain");
  const auto& g = D.geometry();
  VectorField out(g);
  for (std::size_t i = 0; i < D.size(); ++i) {
    if (!domain[i] || !std::isfinite(D[i])) continue;
    const Index3 c = g.coords(i);
    Vec3 grad{};
    for (int a = 0; a < 3; ++a) {
      double nv[2];
      bool ok[2];
      for (int s = 0; s < 2; ++s) {
        Index3 n = c;
        n[a] += s == 0 ? -1 : 1;
        ok[s] = false;
        if (!g.contains(n[0], n[1], n[2])) continue;
        const std::size_t j = g.offset(n[0], n[1], n[2]);
        if (!domain[j] || !std::isfinite(D[j])) continue;
        ok[s] = true;
        nv[s] = D[j];
      }
      const double h = g.spacing[a];
      if (ok[0] && ok[1]) {
        const double back = D[i] - nv[0];
        const double fwd = nv[1] - D[i];
        grad[a] = back * fwd < 0.0 ? back / h : (nv[1] - nv[0]) / (2.0 * h);
      } else if (ok[0]) {
        grad[a] = (D[i] - nv[0]) / h;
      } else if (ok[1]) {
        grad[a] = (nv[1] - D[i]) / h;
      }
    }
    out[i] = grad;
  }
  return out;
}

MaskVolume directional_maxima(const ScalarVolume& D, const MaskVolume& domain) {
  const auto dir = ridge_gradient(D, domain);
  return grid::directional_extrema(D, dir, domain, domain, grid::Extremum::maximum, grid::StepLength::unit);
}

bool is_simple_point(const std::array<bool, 27>& patch) {
  auto idx = [](int x, int y, int z) { return x + 3 * y + 9 * z; };
  // Foreground: 26-connected components among the 26 neighbours.
  std::array<int, 27> label{};
  int fg_components = 0;
  for (int s = 0; s < 27; ++s) {
    if (s == 13 || !patch[s] || label[s]) continue;
    ++fg_components;
    std::vector<int> stack{s};
    label[s] = fg_components;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      const int cx = cur % 3, cy = (cur / 3) % 3, cz = cur / 9;
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = cx + dx, y = cy + dy, z = cz + dz;
            if (x < 0 || y < 0 || z < 0 || x > 2 || y > 2 || z > 2) continue;
            const int n = idx(x, y, z);
            if (n == 13 || !patch[n] || label[n]) continue;
            label[n] = fg_components;
            stack.push_back(n);
          }
    }
  }
  if (fg_components != 1) return false;

  // Background: 6-connected components within the 18-neighbourhood that touch
  // a 6-neighbour of the centre.
  auto in18 = [](int x, int y, int z) { return std::abs(x - 1) + std::abs(y - 1) + std::abs(z - 1) <= 2; };
  std::array<int, 27> bl{};
  int bg_components = 0;
  const int six[6] = {idx(0, 1, 1), idx(2, 1, 1), idx(1, 0, 1), idx(1, 2, 1), idx(1, 1, 0), idx(1, 1, 2)};
  for (int s : six) {
    if (patch[s] || bl[s]) continue;
    ++bg_components;
    std::vector<int> stack{s};
    bl[s] = bg_components;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      const int cx = cur % 3, cy = (cur / 3) % 3, cz = cur / 9;
      const int d6[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
      for (const auto& d : d6) {
        const int x = cx + d[0], y = cy + d[1], z = cz + d[2];
        if (x < 0 || y < 0 || z < 0 || x > 2 || y > 2 || z > 2 || !in18(x, y, z)) continue;
        const int n = idx(x, y, z);
        if (n == 13 || patch[n] || bl[n]) continue;
        bl[n] = bg_components;
        stack.push_back(n);
      }
    }
  }
  return bg_components == 1;
}

MaskVolume thin_to_sheet(const MaskVolume& candidates, const ScalarVolume& D, const MaskVolume& domain) {
  require_same_geometry(candidates, D, "thin_to_sheet distance");
  require_same_geometry(candidates, domain, "thin_to_sheet domain");
  const auto& g = candidates.geometry();
  MaskVolume out = candidates;
  const auto dir = ridge_gradient(D, domain);

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i]) order.push_back(i);
  }
  auto key = [&](std::size_t i) { return std::isfinite(D[i]) ? D[i] : -kInf; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i : order) {
      if (!out[i]) continue;
      const Vec3& d = dir[i];
      int axis = 0;
      for (int a = 1; a < 3; ++a) {
        if (std::abs(d[a]) > std::abs(d[axis])) axis = a;
      }
      if (!(std::abs(d[axis]) > 0.0)) continue;
      const Index3 c = g.coords(i);
      bool thick = false;
      for (int s : {-1, 1}) {
        Index3 n = c;
        n[axis] += s;
        if (g.contains(n[0], n[1], n[2]) && out.at(n[0], n[1], n[2])) thick = true;
      }
      if (!thick) continue;
      std::array<bool, 27> patch{};
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = c[0] + dx, y = c[1] + dy, z = c[2] + dz;
            patch[(dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)] = g.contains(x, y, z) && out.at(x, y, z);
          }
      if (!is_simple_point(patch)) continue;
      out[i] = 0;
      changed = true;
    }
  }
  return out;
}

MaskVolume wm_boundary(const MaskVolume& wm, const MaskVolume& gm) {
  require_same_geometry(wm, gm, "wm_boundary");
  const auto& g = wm.geometry();
  MaskVolume out(g);
  for (std::size_t i = 0; i < wm.size(); ++i) {
    if (wm[i] && !gm[i] && adjacent_to(gm, g, g.coords(i), 6)) out[i] = 1;
  }
  return out;
}

MaskVolume build_pial(const MaskVolume& gm, const MaskVolume& wm, const MaskVolume& fissures) {
  require_same_geometry(gm, wm, "build_pial wm");
  require_same_geometry(gm, fissures, "build_pial fissures");
  const auto& g = gm.geometry();
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (gm[i] && wm[i]) fail(ErrorKind::data, "GM and WM masks overlap");
  }
  MaskVolume pial(g);
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (wm[i]) continue;
    if (fissures[i]) {
      pial[i] = 1;
      continue;
    }
    if (gm[i]) continue;
    const Index3 c = g.coords(i);
    if (adjacent_to(gm, g, c, 6) && !adjacent_to(wm, g, c, 6)) pial[i] = 1;
  }
  return pial;
}

FissureResult extract_fissures(const ScalarVolume& image, const MaskVolume& wm, const MaskVolume& gm,
                               double sigma_voxels) {
  require_same_geometry(image, wm, "fissure wm");
  require_same_geometry(image, gm, "fissure gm");
  FissureResult r;
  r.speed = speed_map(image, sigma_voxels);
  const auto source = wm_boundary(wm, gm);
  r.geodesic = solve_eikonal(r.speed, source, gm);
  MaskVolume reachable = gm;
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (!std::isfinite(r.geodesic.distance[i])) reachable[i] = 0;
  }
  r.candidates = directional_maxima(r.geodesic.distance, reachable);
  r.fissures = thin_to_sheet(r.candidates, r.geodesic.distance, reachable);
  r.pial = build_pial(gm, wm, r.fissures);
  return r;
}

}  // namespace laminar::fissure
