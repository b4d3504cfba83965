#include <doctest.h>

#include <laminar/error.hpp>
#include <laminar/fissure.hpp>
#include <laminar/grid.hpp>
#include <laminar/phantom.hpp>

#include "test_support.hpp"

#include <cmath>

using namespace laminar;
using namespace laminar::fissure;

namespace {

MaskVolume single_voxel(const Geometry& g, Index3 c) {
  MaskVolume m(g);
  m.at(c[0], c[1], c[2]) = 1;
  return m;
}

MaskVolume z_slab(Index3 dims, int z_lo, int z_hi) {
  MaskVolume m(dims, {1, 1, 1});
  for (int z = z_lo; z <= z_hi; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) m.at(x, y, z) = 1;
  return m;
}

}  // namespace

TEST_CASE("speed map defaults, constants and clamping") {
  const auto c = testing_support::filled({12, 12, 12}, 5.0);
  for (double x : speed_map(c).data()) CHECK(x == doctest::Approx(5.0).epsilon(1e-12));

  auto holes = testing_support::filled({12, 12, 12}, 0.0);
  holes.at(6, 6, 6) = 100.0;
  const auto f = speed_map(holes);
  const double peak = *std::max_element(f.data().begin(), f.data().end());
  for (double x : f.data()) CHECK(x >= 1e-6 * peak);

  try {
    speed_map(testing_support::filled({8, 8, 8}, 0.0));
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("eikonal distances from a single voxel under unit speed") {
  const Geometry g{{21, 21, 21}, {1, 1, 1}};
  const ScalarVolume speed(g, 1.0);
  const MaskVolume domain(g, 1);
  const auto r = solve_eikonal(speed, single_voxel(g, {10, 10, 10}), domain);
  CHECK(r.distance.at(10, 10, 10) == 0.0);
  CHECK(r.distance.at(11, 10, 10) == doctest::Approx(1.0));
  CHECK(r.distance.at(10, 9, 10) == doctest::Approx(1.0));
  const double d = r.distance.at(13, 14, 10);
  CHECK(d >= 5.0 - 1e-9);
  CHECK(d <= 5.5);
  CHECK(count_set(r.unreachable) == 0u);
}

TEST_CASE("eikonal scales inversely with speed and respects spacing") {
  const Geometry g{{15, 13, 11}, {0.5, 0.8, 1.2}};
  const MaskVolume domain(g, 1);
  const auto src = single_voxel(g, {3, 4, 5});
  const auto one = solve_eikonal(ScalarVolume(g, 1.0), src, domain);
  const auto two = solve_eikonal(ScalarVolume(g, 2.0), src, domain);
  for (std::size_t i = 0; i < one.distance.size(); ++i) {
    CHECK(two.distance[i] == doctest::Approx(0.5 * one.distance[i]).epsilon(1e-12));
  }
  CHECK(one.distance.at(4, 4, 5) == doctest::Approx(0.5));
  CHECK(one.distance.at(3, 4, 6) == doctest::Approx(1.2));
  for (std::size_t i = 0; i < one.distance.size(); ++i) {
    const auto c = g.coords(i);
    const double exact = std::hypot((c[0] - 3) * 0.5, (c[1] - 4) * 0.8, (c[2] - 5) * 1.2);
    CHECK(one.distance[i] >= exact - 1e-9);
    CHECK(one.distance[i] <= 1.20 * exact + 1e-9);
  }
}

TEST_CASE("eikonal error envelope against exact Euclidean distance") {
  const Geometry g{{32, 32, 32}, {1, 1, 1}};
  const auto r = solve_eikonal(ScalarVolume(g, 1.0), single_voxel(g, {16, 16, 16}), MaskVolume(g, 1));
  double worst_ratio_hi = 0.0, worst_ratio_lo = 1e9;
  for (std::size_t i = 0; i < r.distance.size(); ++i) {
    const auto c = g.coords(i);
    const double exact = std::hypot(c[0] - 16.0, c[1] - 16.0, c[2] - 16.0);
    if (exact == 0.0) continue;
    worst_ratio_hi = std::max(worst_ratio_hi, r.distance[i] / exact);
    worst_ratio_lo = std::min(worst_ratio_lo, r.distance[i] / exact);
  }
  CHECK(worst_ratio_hi <= 1.10);
  CHECK(worst_ratio_lo >= 0.95);
}

TEST_CASE("acceptance order is monotone") {
  const Geometry g{{16, 16, 16}, {1, 1, 1}};
  auto speed = testing_support::random_volume({16, 16, 16}, 3, 0.5, 2.0);
  const auto r = solve_eikonal(speed, single_voxel(g, {2, 3, 4}), MaskVolume(g, 1));
  REQUIRE(!r.acceptance_order.empty());
  for (std::size_t i = 1; i < r.acceptance_order.size(); ++i) {
    CHECK(r.acceptance_order[i] >= r.acceptance_order[i - 1]);
  }
}

TEST_CASE("unreachable parts of a split domain are marked") {
  const Geometry g{{10, 6, 6}, {1, 1, 1}};
  MaskVolume domain(g, 1);
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y) domain.at(5, y, z) = 0;
  const auto r = solve_eikonal(ScalarVolume(g, 1.0), single_voxel(g, {1, 1, 1}), domain);
  for (int x = 6; x < 10; ++x) {
    CHECK(std::isinf(r.distance.at(x, 2, 2)));
    CHECK(r.unreachable.at(x, 2, 2) == 1);
  }
  CHECK(std::isfinite(r.distance.at(4, 5, 5)));
  try {
    solve_eikonal(ScalarVolume(g, 1.0), MaskVolume(g), domain);
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("two planar sources meet on the mid-plane") {
  const Index3 dims{12, 12, 21};
  const Geometry g{dims, {1, 1, 1}};
  const MaskVolume domain(g, 1);
  auto src = z_slab(dims, 0, 0);
  src = mask_or(src, z_slab(dims, 20, 20));
  const auto r = solve_eikonal(ScalarVolume(g, 1.0), src, domain);
  const auto maxima = directional_maxima(r.distance, domain);
  for (int z = 0; z < 21; ++z)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) CHECK(maxima.at(x, y, z) == (z == 10 ? 1 : 0));
}

TEST_CASE("a monotone ramp has no directional maxima") {
  const auto ramp = testing_support::from_function({10, 10, 10}, {1, 1, 1}, [](int x, int y, int z) {
    return 0.3 * x + 0.2 * y + z;
  });
  CHECK(count_set(directional_maxima(ramp, MaskVolume(ramp.geometry(), 1))) == 0u);
}

TEST_CASE("radial distance maxima agree with a brute-force two-sided test") {
  const Geometry g{{17, 17, 17}, {1, 1, 1}};
  MaskVolume domain(g);
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const auto c = g.coords(i);
    domain[i] = std::hypot(c[0] - 8.0, c[1] - 8.0, c[2] - 8.0) <= 7.5;
  }
  const auto r = solve_eikonal(ScalarVolume(g, 1.0), single_voxel(g, {8, 8, 8}), domain);
  const auto kept = directional_maxima(r.distance, domain);
  const auto dir = ridge_gradient(r.distance, domain);
  for (std::size_t i = 0; i < domain.size(); ++i) {
    bool expect = false;
    const double len = norm(dir[i]);
    if (domain[i] && len >= 1e-9) {
      const auto c = g.coords(i);
      Vec3 p{}, m{};
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        p[a] = c[a] + dir[i][a] / len;
        m[a] = c[a] - dir[i][a] / len;
      }
      double vp = 0, vm = 0;
      auto defined = [&](const Vec3& q, double& out) {
        for (int a = 0; a < 3; ++a)
          if (q[a] < 0 || q[a] > 16) return false;
        for (int k = 0; k < 8; ++k) {
          int cc[3];
          double w = 1.0;
          for (int a = 0; a < 3; ++a) {
            const int base = std::min(static_cast<int>(std::floor(q[a])), 15);
            const int bit = (k >> a) & 1;
            cc[a] = base + bit;
            w *= bit ? q[a] - base : 1.0 - (q[a] - base);
          }
          if (w > 1e-12 && !domain.at(cc[0], cc[1], cc[2])) return false;
        }
        out = grid::trilinear_sample(r.distance, q);
        return true;
      };
      inside = defined(p, vp) && defined(m, vm);
      const double x = r.distance[i];
      const double eps = 1e-12 * std::max(1.0, x);
      expect = inside && x >= vp - eps && x >= vm - eps && (x > vp + eps || x > vm + eps);
    }
    CHECK(kept[i] == (expect ? 1 : 0));
  }
  // Radial distance from the centre has no interior ridge.
  CHECK(count_set(kept) == 0u);
}

TEST_CASE("simple point classification") {
  std::array<bool, 27> isolated{};
  isolated[13] = true;
  CHECK_FALSE(is_simple_point(isolated));

  std::array<bool, 27> full{};
  full.fill(true);
  CHECK_FALSE(is_simple_point(full));

  std::array<bool, 27> line_end{};
  line_end[13] = true;
  line_end[14] = true;
  CHECK(is_simple_point(line_end));

  std::array<bool, 27> bridge{};
  bridge[12] = bridge[13] = bridge[14] = true;
  CHECK_FALSE(is_simple_point(bridge));
}

TEST_CASE("thinning a two-voxel plane leaves one voxel per column") {
  const Index3 dims{14, 14, 12};
  const auto plane = z_slab(dims, 5, 6);
  const auto D = testing_support::from_function(dims, {1, 1, 1}, [](int, int, int z) {
    return 6.0 - std::abs(z - 5.6);
  });
  const MaskVolume domain(plane.geometry(), 1);
  const auto thin = thin_to_sheet(plane, D, domain);
  for (int y = 0; y < 14; ++y)
    for (int x = 0; x < 14; ++x) {
      int count = 0;
      for (int z = 0; z < 12; ++z) count += thin.at(x, y, z);
      CHECK(count == 1);
    }
  CHECK(grid::connected_components(thin, 26).sizes.size() == 1u);

  CHECK(thin_to_sheet(thin, D, domain) == thin);
  CHECK(count_set(thin_to_sheet(MaskVolume(plane.geometry()), D, domain)) == 0u);
}

TEST_CASE("thinning never disconnects a component") {
  const Index3 dims{16, 16, 16};
  MaskVolume blob(dims, {1, 1, 1});
  for (int z = 4; z < 12; ++z)
    for (int y = 3; y < 13; ++y)
      for (int x = 5; x < 8; ++x) blob.at(x + (z % 3 == 0), y, z) = 1;
  const auto D = testing_support::random_volume(dims, 4, 0.0, 1.0);
  const auto before = grid::connected_components(blob, 26).sizes.size();
  const auto after = grid::connected_components(thin_to_sheet(blob, D, MaskVolume(blob.geometry(), 1)), 26);
  CHECK(after.sizes.size() == before);
}

TEST_CASE("pial construction") {
  const Index3 dims{8, 8, 12};
  const auto wm = z_slab(dims, 0, 3);
  const auto gm = z_slab(dims, 4, 7);
  const MaskVolume none(wm.geometry());
  const auto pial = build_pial(gm, wm, none);
  CHECK(pial == z_slab(dims, 8, 8));

  MaskVolume sheet(wm.geometry());
  for (int z = 4; z < 7; ++z)
    for (int y = 0; y < 8; ++y) sheet.at(4, y, z) = 1;
  const auto with = build_pial(gm, wm, sheet);
  CHECK(count_set(with) == count_set(pial) + count_set(sheet));
  for (std::size_t i = 0; i < wm.size(); ++i) CHECK(!(with[i] && wm[i]));

  // GM wrapped inside WM: only fissure voxels remain on the pial side.
  MaskVolume enclosed_wm(Index3{9, 9, 9}, {1, 1, 1}, 1);
  MaskVolume enclosed_gm(enclosed_wm.geometry());
  for (int z = 3; z < 6; ++z)
    for (int y = 3; y < 6; ++y)
      for (int x = 3; x < 6; ++x) {
        enclosed_gm.at(x, y, z) = 1;
        enclosed_wm.at(x, y, z) = 0;
      }
  MaskVolume f(enclosed_wm.geometry());
  f.at(4, 4, 4) = 1;
  CHECK(build_pial(enclosed_gm, enclosed_wm, f) == f);

  try {
    build_pial(wm, wm, none);
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("folded phantom fissure lies on the analytic cleft") {
  phantom::PhantomSpec spec;
  spec.kind = phantom::Kind::folded_sheet;
  spec.dims = {48, 6, 40};
  spec.thickness_mm = 1.0;
  spec.fold_amplitude_mm = 1.2;
  spec.fold_wavelength_mm = 2.4;
  spec.fissure_depth_mm = 0.8;
  spec.seed = 3;
  const auto ph = phantom::generate(spec);
  const auto r = extract_fissures(ph.image, ph.truth.wm, ph.truth.gm);
  const auto& g = ph.image.geometry();
  const int plane_x = 24;

  REQUIRE(count_set(r.fissures) > 0u);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (!r.fissures[i]) continue;
    CHECK(std::abs(g.coords(i)[0] - plane_x) <= 1);
  }
  // Rows next to the y faces cannot pass the two-sided test, so the symmetric
  // distance is checked on the interior rows.
  for (int y = 1; y < 5; ++y) {
    for (int z = 0; z < 40; ++z)
      for (int x = 0; x < 48; ++x) {
        const bool extracted = r.fissures.at(x, y, z);
        const bool truth = ph.truth.fissure.at(x, y, z);
        if (!extracted && !truth) continue;
        const auto& other = extracted ? ph.truth.fissure : r.fissures;
        bool near = false;
        for (int dz = -1; dz <= 1 && !near; ++dz)
          for (int dx = -1; dx <= 1 && !near; ++dx) {
            if (std::abs(dx) + std::abs(dz) > 1 || !g.contains(x + dx, y, z + dz)) continue;
            near = other.at(x + dx, y, z + dz) != 0;
          }
        CHECK(near);
      }
  }
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (r.fissures[i]) CHECK(r.pial[i] == 1);
  }
}
