#include <doctest.h>

#include <laminar/error.hpp>
#include <laminar/grid.hpp>
#include <laminar/parallel.hpp>

#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace laminar;
using namespace laminar::grid;
using testing_support::from_function;
using testing_support::random_volume;

namespace {

// Brute-force 3-D convolution with a non-separable, explicitly normalised
// truncated Gaussian. Edges replicate, matching the library's padding rule.
double direct_convolution_at(const ScalarVolume& v, double sigma, int x, int y, int z) {
  const int r = static_cast<int>(std::ceil(4.0 * sigma));
  double mass = 0.0;
  double acc = 0.0;
  const auto& d = v.dims();
  for (int k = -r; k <= r; ++k)
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) {
        const double w = std::exp(-(i * i + j * j + k * k) / (2.0 * sigma * sigma));
        const int a = std::clamp(x + i, 0, d[0] - 1);
        const int b = std::clamp(y + j, 0, d[1] - 1);
        const int c = std::clamp(z + k, 0, d[2] - 1);
        mass += w;
        acc += w * v.at(a, b, c);
      }
  return acc / mass;
}

MaskVolume cube_mask(Index3 dims, Index3 lo, Index3 hi) {
  MaskVolume m(dims, {1, 1, 1});
  for (int z = lo[2]; z <= hi[2]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x) m.at(x, y, z) = 1;
  return m;
}

MaskVolume complement(const MaskVolume& m) {
  MaskVolume out(m.geometry());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 0 : 1;
  return out;
}

}  // namespace

TEST_CASE("smoothing a constant volume returns the constant") {
  const auto v = testing_support::filled({9, 10, 11}, 3.25);
  for (double sigma : {0.5, 1.0, 2.5, 6.0}) {
    const auto s = gaussian_smooth(v, sigma);
    for (double x : s.data()) CHECK(x == doctest::Approx(3.25).epsilon(1e-12));
  }
}

TEST_CASE("impulse response equals the normalised 3-D kernel peak") {
  ScalarVolume v({32, 32, 32}, {1, 1, 1});
  v.at(16, 16, 16) = 1.0;
  const auto s = gaussian_smooth(v, 2.0);
  const double oracle = direct_convolution_at(v, 2.0, 16, 16, 16);
  CHECK(s.at(16, 16, 16) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(s.at(18, 15, 17) == doctest::Approx(direct_convolution_at(v, 2.0, 18, 15, 17)).epsilon(1e-12));
}

TEST_CASE("separable smoothing matches direct convolution near edges") {
  const auto v = random_volume({12, 9, 7}, 5);
  const auto s = gaussian_smooth(v, 1.3);
  for (Index3 p : {Index3{0, 0, 0}, Index3{11, 8, 6}, Index3{5, 0, 3}, Index3{6, 4, 3}}) {
    CHECK(s.at(p[0], p[1], p[2]) == doctest::Approx(direct_convolution_at(v, 1.3, p[0], p[1], p[2])).epsilon(1e-10));
  }
}

TEST_CASE("smoothing preserves the total of an interior-supported input") {
  ScalarVolume v({40, 40, 40}, {1, 1, 1});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double total = 0.0;
  for (int z = 15; z < 25; ++z)
    for (int y = 15; y < 25; ++y)
      for (int x = 15; x < 25; ++x) total += (v.at(x, y, z) = u(rng));
  const auto s = gaussian_smooth(v, 1.5);
  double after = 0.0;
  for (double x : s.data()) after += x;
  CHECK(std::abs(after - total) <= 1e-6 * total);
}

TEST_CASE("support-normalised smoothing of a constant is the constant where defined") {
  ScalarVolume v({20, 20, 20}, {1, 1, 1}, 0.0);
  MaskVolume support({20, 20, 20}, {1, 1, 1});
  for (int z = 0; z < 20; ++z)
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 10; ++x) {
        support.at(x, y, z) = 1;
        v.at(x, y, z) = 1.0;
      }
  ScalarVolume weight;
  const auto s = gaussian_smooth(v, 2.0, support, &weight);
  std::size_t defined = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (weight[i] > 1e-12) {
      ++defined;
      CHECK(s[i] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK(defined > 10u * 20u * 20u);
}

TEST_CASE("invalid sigma and geometry mismatch are rejected") {
  const auto v = testing_support::filled({5, 5, 5}, 1.0);
  for (double bad : {0.0, -1.0, std::nan("")}) {
    try {
      gaussian_smooth(v, bad);
      FAIL("expected a parameter error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parameter);
    }
  }
  MaskVolume wrong({5, 5, 4}, {1, 1, 1});
  try {
    gaussian_smooth(v, 1.0, wrong);
    FAIL("expected a geometry error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::geometry);
  }
}

TEST_CASE("gradient of ramps, quadratics and constants") {
  const Vec3 sp{0.5, 0.7, 1.1};
  const auto ramp = from_function({8, 8, 8}, sp, [&](int x, int, int) { return 2.0 * x * sp[0]; });
  const auto g = gradient(ramp);
  for (int z = 1; z < 7; ++z)
    for (int y = 1; y < 7; ++y)
      for (int x = 1; x < 7; ++x) {
        CHECK(g.at(x, y, z)[0] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(std::abs(g.at(x, y, z)[1]) < 1e-12);
        CHECK(std::abs(g.at(x, y, z)[2]) < 1e-12);
      }

  const auto quad = from_function({10, 6, 6}, {1, 1, 1}, [](int x, int, int) { return double(x) * x; });
  const auto gq = gradient(quad);
  for (int x = 1; x < 9; ++x) {
    const double exact = 2.0 * x;
    CHECK(std::abs(gq.at(x, 3, 3)[0] - exact) <= 1e-9 * exact);
  }

  const auto flat = testing_support::filled({5, 5, 5}, 7.0);
  for (const auto& v : gradient(flat).data()) CHECK((v[0] == 0.0 && v[1] == 0.0 && v[2] == 0.0));

  try {
    gradient(testing_support::filled({2, 5, 5}, 1.0));
    FAIL("expected a geometry error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::geometry);
  }
}

TEST_CASE("hessian of a constant is exactly zero") {
  const auto h = hessian_eigen(testing_support::filled({9, 9, 9}, 4.0), 1.0);
  for (const auto& l : h.eigenvalues) CHECK((l[0] == 0.0 && l[1] == 0.0 && l[2] == 0.0));
}

TEST_CASE("bright plate and bright tube eigen-structure") {
  const double w = 1.5;
  const auto plate = from_function({25, 25, 25}, {1, 1, 1}, [&](int, int, int z) {
    const double d = z - 12.0;
    return std::exp(-d * d / (2 * w * w));
  });
  const auto hp = hessian_eigen(plate, 1.0);
  const std::size_t c = plate.geometry().offset(12, 12, 12);
  const auto lp = hp.eigenvalues[c];
  // Analytic second derivative of the smoothed profile: -1/(w^2 + s^2) scaled by the peak ratio.
  CHECK(lp[2] < 0.0);
  CHECK(std::abs(lp[0]) < 1e-3 * std::abs(lp[2]));
  CHECK(std::abs(lp[1]) < 1e-3 * std::abs(lp[2]));
  CHECK(std::abs(hp.major_vector[c][2]) == doctest::Approx(1.0).epsilon(1e-6));

  const auto tube = from_function({25, 25, 25}, {1, 1, 1}, [&](int x, int y, int) {
    const double r2 = (x - 12.0) * (x - 12.0) + (y - 12.0) * (y - 12.0);
    return std::exp(-r2 / (2 * w * w));
  });
  const auto ht = hessian_eigen(tube, 1.0);
  const auto lt = ht.eigenvalues[c];
  CHECK(lt[1] < 0.0);
  CHECK(lt[2] < 0.0);
  CHECK(std::abs(lt[1]) / std::abs(lt[2]) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(lt[0]) < 1e-3 * std::abs(lt[2]));
}

TEST_CASE("eigen decomposition is ordered and has small residual") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::array<double, 6> h{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    Vec3 l{}, e{};
    symmetric_eigen(h, l, e);
    CHECK(std::abs(l[0]) <= std::abs(l[1]));
    CHECK(std::abs(l[1]) <= std::abs(l[2]));
    const double m[3][3] = {{h[0], h[3], h[4]}, {h[3], h[1], h[5]}, {h[4], h[5], h[2]}};
    double frob = 0.0, resid = 0.0;
    for (int r = 0; r < 3; ++r) {
      double row = 0.0;
      for (int k = 0; k < 3; ++k) {
        row += m[r][k] * e[k];
        frob += m[r][k] * m[r][k];
      }
      resid += (row - l[2] * e[r]) * (row - l[2] * e[r]);
    }
    CHECK(std::sqrt(resid) <= 1e-8 * std::sqrt(frob));
    CHECK(e[2] >= 0.0);
    CHECK(norm(e) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("hessian scale below a quarter voxel is a parameter error") {
  const auto v = testing_support::filled({9, 9, 9}, 1.0, {0.5, 0.5, 0.5});
  try {
    hessian_eigen(v, 0.1);
    FAIL("expected a parameter error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parameter);
  }
}

TEST_CASE("trilinear sampling") {
  ScalarVolume v({2, 2, 2}, {1, 1, 1});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i);
  CHECK(trilinear_sample(v, {1, 0, 1}) == v.at(1, 0, 1));
  ScalarVolume e({2, 1 + 1, 2}, {1, 1, 1});
  e.at(0, 0, 0) = 2.0;
  e.at(1, 0, 0) = 4.0;
  CHECK(trilinear_sample(e, {0.5, 0, 0}) == doctest::Approx(3.0));

  const auto ramp = from_function({6, 7, 8}, {1, 1, 1}, [](int x, int y, int z) { return 0.3 * x - 1.7 * y + 2.1 * z + 4.0; });
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ux(0.0, 5.0), uy(0.0, 6.0), uz(0.0, 7.0);
  for (int k = 0; k < 200; ++k) {
    const Vec3 p{ux(rng), uy(rng), uz(rng)};
    CHECK(std::abs(trilinear_sample(ramp, p) - (0.3 * p[0] - 1.7 * p[1] + 2.1 * p[2] + 4.0)) < 1e-9);
  }
  try {
    trilinear_sample(ramp, {-0.1, 0, 0});
    FAIL("expected a domain error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::domain);
  }
}

TEST_CASE("morphology examples") {
  const auto cube = cube_mask({15, 15, 15}, {3, 3, 3}, {11, 11, 11});
  const auto opened = morphology(morphology(cube, MorphOp::erode, 6), MorphOp::dilate, 6);
  CHECK(count_set(opened) <= count_set(cube));
  for (std::size_t i = 0; i < cube.size(); ++i) CHECK((!opened[i] || cube[i]));

  MaskVolume single({5, 5, 5}, {1, 1, 1});
  single.at(2, 2, 2) = 1;
  for (int conn : {6, 18, 26}) CHECK(count_set(morphology(single, MorphOp::erode, conn)) == 0u);

  const MaskVolume empty_condition(cube.geometry());
  CHECK(morphology(cube, MorphOp::erode, 26, &empty_condition) == cube);
  CHECK(morphology(cube, MorphOp::dilate, 26, &empty_condition) == cube);
}

TEST_CASE("erosion and dilation are complement duals") {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.6);
  MaskVolume m({12, 11, 10}, {1, 1, 1});
  for (auto& b : m.data()) b = coin(rng) ? 1 : 0;
  for (int conn : {6, 18, 26}) {
    const auto eroded = morphology(m, MorphOp::erode, conn);
    const auto dual = complement(morphology(complement(m), MorphOp::dilate, conn));
    CHECK(eroded == dual);
  }
}

TEST_CASE("connected components") {
  MaskVolume two({12, 5, 5}, {1, 1, 1});
  for (int z = 1; z < 4; ++z)
    for (int y = 1; y < 4; ++y)
      for (int x = 1; x < 4; ++x) {
        two.at(x, y, z) = 1;
        two.at(x + 6, y, z) = 1;
      }
  const auto cc = connected_components(two, 26);
  REQUIRE(cc.sizes.size() == 2u);
  CHECK(cc.sizes[0] == 27u);
  CHECK(cc.sizes[1] == 27u);
  CHECK(cc.labels.at(1, 1, 1) == 1);
  CHECK(cc.labels.at(7, 1, 1) == 2);

  CHECK(connected_components(MaskVolume({4, 4, 4}, {1, 1, 1}), 6).sizes.empty());

  const auto face = mask_or(cube_mask({8, 4, 4}, {0, 0, 0}, {2, 2, 2}), cube_mask({8, 4, 4}, {3, 0, 0}, {5, 2, 2}));
  CHECK(connected_components(face, 6).sizes.size() == 1u);
  const auto corner = mask_or(cube_mask({8, 8, 8}, {0, 0, 0}, {2, 2, 2}), cube_mask({8, 8, 8}, {3, 3, 3}, {5, 5, 5}));
  CHECK(connected_components(corner, 6).sizes.size() == 2u);
  CHECK(connected_components(corner, 18).sizes.size() == 2u);
  CHECK(connected_components(corner, 26).sizes.size() == 1u);
}

TEST_CASE("operations are independent of the worker count") {
  const auto v = random_volume({30, 28, 26}, 21);
  set_worker_count(1);
  const auto s1 = gaussian_smooth(v, 1.7);
  const auto h1 = hessian_eigen(v, 1.2);
  set_worker_count(4);
  const auto s4 = gaussian_smooth(v, 1.7);
  const auto h4 = hessian_eigen(v, 1.2);
  set_worker_count(0);
  CHECK(s1 == s4);
  CHECK(h1.eigenvalues == h4.eigenvalues);
  CHECK(h1.major_vector == h4.major_vector);
}
