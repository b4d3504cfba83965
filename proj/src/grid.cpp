#include "laminar/grid.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "laminar/parallel.hpp"

namespace laminar::grid {

namespace {

std::vector<Index3> make_neighbourhood(int connectivity) {
  std::vector<Index3> out;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int order = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (order == 0) continue;
        if (connectivity == 6 && order > 1) continue;
        if (connectivity == 18 && order > 2) continue;
        out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

void check_sigma(double sigma) {
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    fail(ErrorKind::parameter, "gaussian sigma must be finite and positive, got " + std::to_string(sigma));
  }
}

// Convolves every line along `axis` with `kernel`, clamping indices at the edges.
void convolve_axis(const std::vector<double>& in, std::vector<double>& out, const Geometry& g, int axis,
                   const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int n = g.dims[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(g.dims[0])
                                                       : static_cast<std::size_t>(g.dims[0]) * g.dims[1];
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  const std::size_t lines = static_cast<std::size_t>(g.dims[a1]) * g.dims[a2];
  parallel_for(lines, [&](std::size_t begin, std::size_t end) {
    std::vector<double> line(static_cast<std::size_t>(n));
    for (std::size_t l = begin; l < end; ++l) {
      Index3 c{0, 0, 0};
      c[a1] = static_cast<int>(l % static_cast<std::size_t>(g.dims[a1]));
      c[a2] = static_cast<int>(l / static_cast<std::size_t>(g.dims[a1]));
      const std::size_t base = g.offset(c[0], c[1], c[2]);
      for (int i = 0; i < n; ++i) line[i] = in[base + i * stride];
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int j = std::clamp(i + k, 0, n - 1);
          acc += kernel[k + radius] * line[j];
        }
        out[base + i * stride] = acc;
      }
    }
  });
}

std::vector<double> separable(const std::vector<double>& data, const Geometry& g, const Vec3& sigma) {
  std::vector<double> a = data;
  std::vector<double> b(data.size());
  for (int axis = 0; axis < 3; ++axis) {
    convolve_axis(a, b, g, axis, gaussian_kernel(sigma[axis]));
    std::swap(a, b);
  }
  return a;
}

}  // namespace

const std::vector<Index3>& neighbourhood(int connectivity) {
  static const std::vector<Index3> n6 = make_neighbourhood(6);
  static const std::vector<Index3> n18 = make_neighbourhood(18);
  static const std::vector<Index3> n26 = make_neighbourhood(26);
  switch (connectivity) {
    case 6: return n6;
    case 18: return n18;
    case 26: return n26;
    default: fail(ErrorKind::parameter, "connectivity must be 6, 18 or 26");
  }
}

std::vector<double> gaussian_kernel(double sigma) {
  check_sigma(sigma);
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * static_cast<std::size_t>(radius) + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& w : k) w /= sum;
  return k;
}

ScalarVolume gaussian_smooth(const ScalarVolume& v, double sigma_voxels) {
  check_sigma(sigma_voxels);
  return gaussian_smooth(v, Vec3{sigma_voxels, sigma_voxels, sigma_voxels});
}

ScalarVolume gaussian_smooth(const ScalarVolume& v, const Vec3& sigma_voxels) {
  for (double s : sigma_voxels) check_sigma(s);
  ScalarVolume out(v.geometry());
  out.data() = separable(v.data(), v.geometry(), sigma_voxels);
  return out;
}

ScalarVolume gaussian_smooth(const ScalarVolume& v, double sigma_voxels, const MaskVolume& support,
                             ScalarVolume* weight_out) {
  check_sigma(sigma_voxels);
  require_same_geometry(v, support, "gaussian_smooth support");
  const Vec3 sigma{sigma_voxels, sigma_voxels, sigma_voxels};
  std::vector<double> num(v.size());
  std::vector<double> den(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    den[i] = support[i] ? 1.0 : 0.0;
    num[i] = support[i] ? v[i] : 0.0;
  }
  num = separable(num, v.geometry(), sigma);
  den = separable(den, v.geometry(), sigma);
  ScalarVolume out(v.geometry());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = den[i] > 1e-12 ? num[i] / den[i] : 0.0;
  }
  if (weight_out) {
    *weight_out = ScalarVolume(v.geometry());
    weight_out->data() = std::move(den);
  }
  return out;
}

VectorField gradient(const ScalarVolume& v) {
  const auto& g = v.geometry();
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] < 3) fail(ErrorKind::geometry, "gradient needs at least 3 voxels per axis");
  }
  VectorField out(g);
  parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t z0, std::size_t z1) {
    for (int z = static_cast<int>(z0); z < static_cast<int>(z1); ++z) {
      for (int y = 0; y < g.dims[1]; ++y) {
        for (int x = 0; x < g.dims[0]; ++x) {
          const Index3 c{x, y, z};
          Vec3 d{};
          for (int a = 0; a < 3; ++a) {
            Index3 lo = c, hi = c;
            double h = 2.0 * g.spacing[a];
            if (c[a] == 0) {
              hi[a] += 1;
              h = g.spacing[a];
            } else if (c[a] == g.dims[a] - 1) {
              lo[a] -= 1;
              h = g.spacing[a];
            } else {
              lo[a] -= 1;
              hi[a] += 1;
            }
            d[a] = (v.at(hi[0], hi[1], hi[2]) - v.at(lo[0], lo[1], lo[2])) / h;
          }
          out.at(x, y, z) = d;
        }
      }
    }
  });
  return out;
}

void symmetric_eigen(const std::array<double, 6>& h, Vec3& eigenvalues, Vec3& major_vector) {
  Eigen::Matrix3d m;
  m << h[0], h[3], h[4], h[3], h[1], h[5], h[4], h[5], h[2];
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(m);
  const auto& vals = solver.eigenvalues();
  const auto& vecs = solver.eigenvectors();
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return std::abs(vals[a]) < std::abs(vals[b]); });
  for (int k = 0; k < 3; ++k) eigenvalues[k] = vals[order[k]];
  Vec3 e{vecs(0, order[2]), vecs(1, order[2]), vecs(2, order[2])};
  const double flip = e[2] != 0.0 ? e[2] : e[1] != 0.0 ? e[1] : e[0];
  if (flip < 0.0) {
    for (auto& c : e) c = -c;
  }
  major_vector = e;
}

HessianEigen hessian_eigen(const ScalarVolume& v, double scale_mm, const MaskVolume* where) {
  const auto& g = v.geometry();
  if (!std::isfinite(scale_mm) || scale_mm <= 0.0) fail(ErrorKind::parameter, "hessian scale must be positive");
  if (where) require_same_geometry(v, *where, "hessian_eigen mask");
  Vec3 sigma{};
  for (int a = 0; a < 3; ++a) {
    sigma[a] = scale_mm / g.spacing[a];
    if (sigma[a] < 0.25) {
      fail(ErrorKind::parameter, "hessian scale " + std::to_string(scale_mm) + " mm is below 0.25 voxel on axis " +
                                     std::to_string(a));
    }
  }
  const ScalarVolume f = gaussian_smooth(v, sigma);
  HessianEigen out;
  out.geometry = g;
  out.eigenvalues.assign(v.size(), Vec3{});
  out.major_vector.assign(v.size(), Vec3{});
  out.frobenius.assign(v.size(), 0.0);
  const double sx = g.spacing[0], sy = g.spacing[1], sz = g.spacing[2];
  parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t z0, std::size_t z1) {
    for (int z = static_cast<int>(z0); z < static_cast<int>(z1); ++z) {
      const int zm = std::max(z - 1, 0), zp = std::min(z + 1, g.dims[2] - 1);
      for (int y = 0; y < g.dims[1]; ++y) {
        const int ym = std::max(y - 1, 0), yp = std::min(y + 1, g.dims[1] - 1);
        for (int x = 0; x < g.dims[0]; ++x) {
          const std::size_t i = g.offset(x, y, z);
          if (where && !(*where)[i]) continue;
          const int xm = std::max(x - 1, 0), xp = std::min(x + 1, g.dims[0] - 1);
          const double c = f.at(x, y, z);
          std::array<double, 6> h{};
          h[0] = (f.at(xp, y, z) - 2.0 * c + f.at(xm, y, z)) / (sx * sx);
          h[1] = (f.at(x, yp, z) - 2.0 * c + f.at(x, ym, z)) / (sy * sy);
          h[2] = (f.at(x, y, zp) - 2.0 * c + f.at(x, y, zm)) / (sz * sz);
          h[3] = (f.at(xp, yp, z) - f.at(xp, ym, z) - f.at(xm, yp, z) + f.at(xm, ym, z)) / (4.0 * sx * sy);
          h[4] = (f.at(xp, y, zp) - f.at(xp, y, zm) - f.at(xm, y, zp) + f.at(xm, y, zm)) / (4.0 * sx * sz);
          h[5] = (f.at(x, yp, zp) - f.at(x, yp, zm) - f.at(x, ym, zp) + f.at(x, ym, zm)) / (4.0 * sy * sz);
          symmetric_eigen(h, out.eigenvalues[i], out.major_vector[i]);
          out.frobenius[i] = std::sqrt(h[0] * h[0] + h[1] * h[1] + h[2] * h[2] +
                                       2.0 * (h[3] * h[3] + h[4] * h[4] + h[5] * h[5]));
        }
      }
    }
  });
  return out;
}

double trilinear_sample(const ScalarVolume& v, const Vec3& p) {
  const auto& d = v.dims();
  int base[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(p[a]) || p[a] < 0.0 || p[a] > d[a] - 1) {
      fail(ErrorKind::domain, "sample point outside the grid on axis " + std::to_string(a));
    }
    base[a] = std::min(static_cast<int>(std::floor(p[a])), std::max(d[a] - 2, 0));
    t[a] = p[a] - base[a];
  }
  double acc = 0.0;
  for (int k = 0; k < 8; ++k) {
    int c[3];
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
      const int bit = (k >> a) & 1;
      c[a] = base[a] + bit;
      w *= bit ? t[a] : 1.0 - t[a];
    }
    if (w == 0.0) continue;
    acc += w * v.at(c[0], c[1], c[2]);
  }
  return acc;
}

MaskVolume morphology(const MaskVolume& m, MorphOp op, int connectivity, const MaskVolume* condition) {
  if (condition) require_same_geometry(m, *condition, "morphology condition");
  const auto& nb = neighbourhood(connectivity);
  const auto& g = m.geometry();
  MaskVolume out(g);
  parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t z0, std::size_t z1) {
    for (int z = static_cast<int>(z0); z < static_cast<int>(z1); ++z) {
      for (int y = 0; y < g.dims[1]; ++y) {
        for (int x = 0; x < g.dims[0]; ++x) {
          const std::size_t i = g.offset(x, y, z);
          const bool self = m[i] != 0;
          bool result = self;
          if (op == MorphOp::erode && self) {
            for (const auto& o : nb) {
              const int a = x + o[0], b = y + o[1], c = z + o[2];
              if (g.contains(a, b, c) && !m.at(a, b, c)) {
                result = false;
                break;
              }
            }
          } else if (op == MorphOp::dilate && !self) {
            for (const auto& o : nb) {
              const int a = x + o[0], b = y + o[1], c = z + o[2];
              if (g.contains(a, b, c) && m.at(a, b, c)) {
                result = true;
                break;
              }
            }
          }
          if (condition && !(*condition)[i]) result = self;
          out[i] = result ? 1 : 0;
        }
      }
    }
  });
  return out;
}

Components connected_components(const MaskVolume& m, int connectivity) {
  const auto& nb = neighbourhood(connectivity);
  const auto& g = m.geometry();
  Components out{LabelVolume(g), {}};
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i] || out.labels[i] != 0) continue;
    const auto label = static_cast<std::int32_t>(out.sizes.size() + 1);
    std::size_t size = 0;
    out.labels[i] = label;
    queue.push_back(i);
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      ++size;
      const Index3 c = g.coords(cur);
      for (const auto& o : nb) {
        const int a = c[0] + o[0], b = c[1] + o[1], d = c[2] + o[2];
        if (!g.contains(a, b, d)) continue;
        const std::size_t j = g.offset(a, b, d);
        if (m[j] && out.labels[j] == 0) {
          out.labels[j] = label;
          queue.push_back(j);
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

namespace {

bool sample_defined(const ScalarVolume& v, const MaskVolume& domain, const Vec3& p, double& value) {
  const auto& d = v.dims();
  int base[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= 0.0) || p[a] > d[a] - 1) return false;
    base[a] = std::min(static_cast<int>(std::floor(p[a])), std::max(d[a] - 2, 0));
    t[a] = p[a] - base[a];
  }
  double acc = 0.0;
  for (int k = 0; k < 8; ++k) {
    int c[3];
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
      const int bit = (k >> a) & 1;
      c[a] = std::min(base[a] + bit, d[a] - 1);
      w *= bit ? t[a] : 1.0 - t[a];
    }
    if (w <= 1e-12) continue;
    const std::size_t i = v.geometry().offset(c[0], c[1], c[2]);
    if (!domain[i] || !std::isfinite(v[i])) return false;
    acc += w * v[i];
  }
  value = acc;
  return true;
}

}  // namespace

MaskVolume directional_extrema(const ScalarVolume& v, const VectorField& dir, const MaskVolume& candidates,
                               const MaskVolume& sample_domain, Extremum kind, StepLength step) {
  require_same_geometry(v, dir, "directional_extrema direction");
  require_same_geometry(v, candidates, "directional_extrema candidates");
  require_same_geometry(v, sample_domain, "directional_extrema domain");
  const auto& g = v.geometry();
  MaskVolume out(g);
  const double sign = kind == Extremum::maximum ? 1.0 : -1.0;
  parallel_for(v.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if (!candidates[i] || !std::isfinite(v[i])) continue;
      const Vec3& gdir = dir[i];
      const double len = norm(gdir);
      if (!(len >= 1e-9)) continue;
      Vec3 u{};
      double extent = 0.0;
      for (int a = 0; a < 3; ++a) {
        u[a] = gdir[a] / len / g.spacing[a];
        extent += std::abs(gdir[a] / len) * g.spacing[a];
      }
      // u is in voxels per mm; the unit step is one voxel in index space.
      const double scale = step == StepLength::voxel_extent ? extent : 1.0 / norm(u);
      const Index3 c = g.coords(i);
      Vec3 plus{}, minus{};
      for (int a = 0; a < 3; ++a) {
        plus[a] = c[a] + scale * u[a];
        minus[a] = c[a] - scale * u[a];
      }
      double vp = 0.0, vm = 0.0;
      if (!sample_defined(v, sample_domain, plus, vp) || !sample_defined(v, sample_domain, minus, vm)) continue;
      const double x = sign * v[i];
      vp *= sign;
      vm *= sign;
      const double eps = 1e-12 * std::max(1.0, std::abs(x));
      const bool not_worse = x >= vp - eps && x >= vm - eps;
      const bool strict = x > vp + eps || x > vm + eps;
      out[i] = (not_worse && strict) ? 1 : 0;
    }
  });
  return out;
}

MaskVolume remove_small_components(const MaskVolume& m, int connectivity, std::size_t min_size) {
  const auto cc = connected_components(m, connectivity);
  MaskVolume out(m.geometry());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto l = cc.labels[i];
    out[i] = (l > 0 && cc.sizes[static_cast<std::size_t>(l - 1)] >= min_size) ? 1 : 0;
  }
  return out;
}

}  // namespace laminar::grid
