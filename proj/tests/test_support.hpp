#pragma once

#include <laminar/volume.hpp>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace testing_support {

inline laminar::ScalarVolume filled(laminar::Index3 dims, double value, laminar::Vec3 spacing = {1, 1, 1}) {
  return laminar::ScalarVolume(dims, spacing, value);
}

template <class F>
laminar::ScalarVolume from_function(laminar::Index3 dims, laminar::Vec3 spacing, F f) {
  laminar::ScalarVolume v(dims, spacing);
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) v.at(x, y, z) = f(x, y, z);
  return v;
}

inline laminar::ScalarVolume random_volume(laminar::Index3 dims, std::uint64_t seed, double lo = -1.0,
                                           double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  laminar::ScalarVolume v(dims, {1, 1, 1});
  for (auto& x : v.data()) x = u(rng);
  return v;
}

// A scratch directory that is wiped on construction and destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("laminar_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& leaf) const { return (path_ / leaf).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
