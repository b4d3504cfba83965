#include "laminar/volume.hpp"

#include <string>

namespace laminar {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::geometry: return "geometry";
    case ErrorKind::domain: return "domain";
    case ErrorKind::format: return "format";
    case ErrorKind::conversion: return "conversion";
    case ErrorKind::io: return "io";
    case ErrorKind::data: return "data";
    case ErrorKind::topology: return "topology";
    case ErrorKind::stage: return "stage";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) fail(ErrorKind::geometry, "dimension " + std::to_string(a) + " must be positive");
    if (!std::isfinite(spacing[a]) || spacing[a] <= 0.0) {
      fail(ErrorKind::geometry, "spacing " + std::to_string(a) + " must be finite and positive");
    }
  }
}

std::size_t count_set(const MaskVolume& m) {
  std::size_t n = 0;
  for (auto v : m.data()) n += v != 0;
  return n;
}

namespace {
template <class Op>
MaskVolume combine(const MaskVolume& a, const MaskVolume& b, const char* what, Op op) {
  require_same_geometry(a, b, what);
  MaskVolume out(a.geometry());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i] != 0, b[i] != 0) ? 1 : 0;
  return out;
}
}  // namespace

MaskVolume mask_and(const MaskVolume& a, const MaskVolume& b) {
  return combine(a, b, "mask_and", [](bool x, bool y) { return x && y; });
}
MaskVolume mask_or(const MaskVolume& a, const MaskVolume& b) {
  return combine(a, b, "mask_or", [](bool x, bool y) { return x || y; });
}
MaskVolume mask_minus(const MaskVolume& a, const MaskVolume& b) {
  return combine(a, b, "mask_minus", [](bool x, bool y) { return x && !y; });
}

}  // namespace laminar
