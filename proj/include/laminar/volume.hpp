#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "laminar/error.hpp"

namespace laminar {

using Index3 = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

/// Grid dimensions plus physical voxel size in mm. Voxel (x, y, z) lives at
/// linear offset x + nx * (y + ny * z).
struct Geometry {
  Index3 dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

  std::size_t offset(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }
  Index3 coords(std::size_t i) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny), static_cast<int>(i / (nx * ny))};
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }

  bool operator==(const Geometry& o) const { return dims == o.dims && spacing == o.spacing; }
  bool operator!=(const Geometry& o) const { return !(*this == o); }

  /// Throws a geometry error unless dims are positive and spacing finite and positive.
  void validate() const;
};

template <class T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  explicit Volume(const Geometry& geom, T fill = T{}) : geom_(geom) {
    geom_.validate();
    data_.assign(geom_.voxel_count(), fill);
  }
  Volume(Index3 dims, Vec3 spacing, T fill = T{}) : Volume(Geometry{dims, spacing}, fill) {}

  const Geometry& geometry() const { return geom_; }
  const Index3& dims() const { return geom_.dims; }
  const Vec3& spacing() const { return geom_.spacing; }
  std::size_t size() const { return data_.size(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(int x, int y, int z) { return data_[geom_.offset(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data_[geom_.offset(x, y, z)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Volume& o) const { return geom_ == o.geom_ && data_ == o.data_; }

 private:
  Geometry geom_;
  std::vector<T> data_;
};

using ScalarVolume = Volume<double>;
/// One byte per voxel; any nonzero value counts as set.
using MaskVolume = Volume<std::uint8_t>;
using LabelVolume = Volume<std::int32_t>;
using VectorField = Volume<Vec3>;

template <class A, class B>
void require_same_geometry(const Volume<A>& a, const Volume<B>& b, const char* what) {
  if (a.geometry() != b.geometry()) {
    fail(ErrorKind::geometry, std::string("geometry mismatch: ") + what);
  }
}

std::size_t count_set(const MaskVolume& m);

MaskVolume mask_and(const MaskVolume& a, const MaskVolume& b);
MaskVolume mask_or(const MaskVolume& a, const MaskVolume& b);
MaskVolume mask_minus(const MaskVolume& a, const MaskVolume& b);

inline double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

}  // namespace laminar
