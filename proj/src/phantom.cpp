#include "laminar/phantom.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "laminar/grid.hpp"
#include "laminar/parallel.hpp"
#include "laminar/volume_io.hpp"

namespace laminar::phantom {
using namespace laminar::grid;
using namespace laminar::io;

namespace {

using nlohmann::json;

constexpr double kPi = std::numbers::pi;

enum class Tissue { background, wm, granular, purkinje, molecular };

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::slab: return "slab";
    case Kind::spherical_shell: return "spherical_shell";
    case Kind::folded_sheet: return "folded_sheet";
  }
  return "slab";
}

Kind parse_kind(const std::string& s) {
  if (s == "slab") return Kind::slab;
  if (s == "spherical_shell") return Kind::spherical_shell;
  if (s == "folded_sheet") return Kind::folded_sheet;
  fail(ErrorKind::parameter, "phantom spec: unknown kind '" + s + "'");
}

double min_spacing(const PhantomSpec& s) { return std::min({s.spacing[0], s.spacing[1], s.spacing[2]}); }

// Analytic laminar geometry evaluated at a physical point (mm, voxel centres at i * spacing).
class Model {
 public:
  explicit Model(const PhantomSpec& s) : s_(s) {
    for (int a = 0; a < 3; ++a) extent_[a] = (s.dims[a] - 1) * s.spacing[a];
    if (s.kind == Kind::spherical_shell) {
      for (int a = 0; a < 3; ++a) centre_[a] = 0.5 * extent_[a];
    } else {
      z0_ = s.wm_depth_mm >= 0.0 ? s.wm_depth_mm : 0.5 * (extent_[2] - s.thickness_mm);
      // Put the trough of the fold on the voxel column nearest the centre.
      trough_x_ = std::round(0.5 * extent_[0] / s.spacing[0]) * s.spacing[0];
    }
  }

  double wm_height(double x) const {
    if (s_.kind != Kind::folded_sheet || s_.fold_amplitude_mm == 0.0) return z0_;
    return z0_ - s_.fold_amplitude_mm * std::cos(2.0 * kPi * (x - trough_x_) / s_.fold_wavelength_mm);
  }
  double wm_slope(double x) const {
    if (s_.kind != Kind::folded_sheet || s_.fold_amplitude_mm == 0.0) return 0.0;
    const double k = 2.0 * kPi / s_.fold_wavelength_mm;
    return s_.fold_amplitude_mm * k * std::sin(k * (x - trough_x_));
  }

  struct Local {
    double depth;      // perpendicular distance from the WM surface, positive into GM
    double thickness;  // perpendicular GM thickness
    Vec3 normal;
  };

  Local local(const Vec3& p) const {
    if (s_.kind == Kind::spherical_shell) {
      Vec3 d{p[0] - centre_[0], p[1] - centre_[1], p[2] - centre_[2]};
      const double r = norm(d);
      Vec3 n{0.0, 0.0, 1.0};
      if (r > 0.0) n = {d[0] / r, d[1] / r, d[2] / r};
      return {r - s_.inner_radius_mm, s_.thickness_mm, n};
    }
    const double slope = wm_slope(p[0]);
    const double c = 1.0 / std::sqrt(1.0 + slope * slope);
    return {(p[2] - wm_height(p[0])) * c, s_.thickness_mm * c, {-slope * c, 0.0, c}};
  }

  bool in_cleft(const Vec3& p) const {
    if (s_.kind != Kind::folded_sheet || s_.fissure_depth_mm <= 0.0) return false;
    const double half = 0.5 * s_.fissure_width_voxels * s_.spacing[0];
    const double top = wm_height(trough_x_) + s_.thickness_mm;
    return std::abs(p[0] - trough_x_) <= half && p[2] >= top - s_.fissure_depth_mm;
  }

  Tissue classify(const Vec3& p) const {
    const Local l = local(p);
    if (l.depth < 0.0) return Tissue::wm;
    if (l.depth >= l.thickness) return Tissue::background;
    if (in_cleft(p)) return Tissue::background;
    const double half = 0.5 * s_.purkinje_width_voxels * min_spacing(s_);
    const double off = l.depth - s_.mid_fraction * l.thickness;
    if (std::abs(off) <= half) return Tissue::purkinje;
    return off < 0.0 ? Tissue::granular : Tissue::molecular;
  }

  double intensity(Tissue t) const {
    const auto& I = s_.intensities;
    switch (t) {
      case Tissue::background: return I.background;
      case Tissue::wm: return I.wm;
      case Tissue::granular: return I.granular;
      case Tissue::purkinje: return I.purkinje;
      case Tissue::molecular: return I.molecular;
    }
    return 0.0;
  }

  double tiv() const {
    const auto& sp = s_.spacing;
    if (s_.kind == Kind::spherical_shell) {
      const double r = s_.inner_radius_mm + s_.thickness_mm;
      return 4.0 / 3.0 * kPi * r * r * r;
    }
    // Tissue fills the grid from the bottom face up to the pial surface.
    const double lx = s_.dims[0] * sp[0];
    const double ly = s_.dims[1] * sp[1];
    const double x_lo = -0.5 * sp[0];
    const double x_hi = x_lo + lx;
    double column = (z0_ + s_.thickness_mm + 0.5 * sp[2]) * lx;
    if (s_.kind == Kind::folded_sheet && s_.fold_amplitude_mm != 0.0) {
      const double k = 2.0 * kPi / s_.fold_wavelength_mm;
      column -= s_.fold_amplitude_mm / k * (std::sin(k * (x_hi - trough_x_)) - std::sin(k * (x_lo - trough_x_)));
    }
    return column * ly;
  }

  double trough_x() const { return trough_x_; }
  double fissure_top() const { return wm_height(trough_x_) + s_.thickness_mm; }
  double z0() const { return z0_; }
  const Vec3& extent() const { return extent_; }
  const Vec3& centre() const { return centre_; }

 private:
  const PhantomSpec& s_;
  Vec3 extent_{};
  Vec3 centre_{};
  double z0_ = 0.0;
  double trough_x_ = 0.0;
};

Vec3 position(const Geometry& g, int x, int y, int z) {
  return {x * g.spacing[0], y * g.spacing[1], z * g.spacing[2]};
}

}  // namespace

void PhantomSpec::validate() const {
  Geometry{dims, spacing}.validate();
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::parameter, "phantom spec: " + msg);
  };
  need(std::isfinite(thickness_mm) && thickness_mm > 0.0, "thickness_mm must be positive");
  need(mid_fraction > 0.0 && mid_fraction < 1.0, "mid_fraction must lie strictly inside (0, 1)");
  need(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "noise_sigma must be non-negative");
  need(pv_sigma_voxels >= 0.0 && std::isfinite(pv_sigma_voxels), "pv_sigma_voxels must be non-negative");
  need(purkinje_width_voxels > 0.0, "purkinje_width_voxels must be positive");
  need(regions >= 1 && regions <= dims[0], "regions must lie in [1, nx]");
  need(supersample >= 1 && supersample <= 8, "supersample must lie in [1, 8]");
  const auto& I = intensities;
  for (double v : {I.background, I.wm, I.granular, I.purkinje, I.molecular}) need(std::isfinite(v), "intensities must be finite");

  Vec3 extent{};
  for (int a = 0; a < 3; ++a) extent[a] = (dims[a] - 1) * spacing[a];
  if (kind == Kind::spherical_shell) {
    need(inner_radius_mm > 0.0, "inner_radius_mm must be positive");
    const double outer = inner_radius_mm + thickness_mm;
    for (int a = 0; a < 3; ++a) {
      need(outer + spacing[a] <= 0.5 * extent[a], "shell does not fit inside the grid");
    }
    return;
  }
  const double z0 = wm_depth_mm >= 0.0 ? wm_depth_mm : 0.5 * (extent[2] - thickness_mm);
  double amp = 0.0;
  if (kind == Kind::folded_sheet) {
    need(fold_wavelength_mm > 0.0, "fold_wavelength_mm must be positive");
    need(fold_amplitude_mm >= 0.0, "fold_amplitude_mm must be non-negative");
    need(fissure_depth_mm >= 0.0 && fissure_depth_mm <= thickness_mm, "fissure_depth_mm must lie in [0, thickness_mm]");
    need(fissure_width_voxels > 0.0, "fissure_width_voxels must be positive");
    amp = fold_amplitude_mm;
  }
  need(z0 - amp >= spacing[2], "white matter does not fit below the cortex");
  need(z0 + amp + thickness_mm + spacing[2] <= extent[2], "cortex thicker than the domain");
}

std::string PhantomSpec::to_json() const {
  json j;
  j["kind"] = kind_name(kind);
  j["dims"] = dims;
  j["spacing"] = spacing;
  j["thickness_mm"] = thickness_mm;
  j["mid_fraction"] = mid_fraction;
  j["inner_radius_mm"] = inner_radius_mm;
  j["wm_depth_mm"] = wm_depth_mm;
  j["fold_amplitude_mm"] = fold_amplitude_mm;
  j["fold_wavelength_mm"] = fold_wavelength_mm;
  j["fissure_depth_mm"] = fissure_depth_mm;
  j["fissure_width_voxels"] = fissure_width_voxels;
  j["purkinje_width_voxels"] = purkinje_width_voxels;
  j["intensities"] = {{"background", intensities.background},
                      {"wm", intensities.wm},
                      {"granular", intensities.granular},
                      {"purkinje", intensities.purkinje},
                      {"molecular", intensities.molecular}};
  j["noise_sigma"] = noise_sigma;
  j["pv_sigma_voxels"] = pv_sigma_voxels;
  j["seed"] = seed;
  j["regions"] = regions;
  j["supersample"] = supersample;
  return j.dump(2);
}

PhantomSpec PhantomSpec::from_json(const std::string& text) {
  PhantomSpec s;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) fail(ErrorKind::format, "phantom spec must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "kind") s.kind = parse_kind(value.get<std::string>());
      else if (key == "dims") s.dims = value.get<Index3>();
      else if (key == "spacing") {
        if (value.is_number()) s.spacing = {value.get<double>(), value.get<double>(), value.get<double>()};
        else s.spacing = value.get<Vec3>();
      }
      else if (key == "thickness_mm") s.thickness_mm = value.get<double>();
      else if (key == "mid_fraction") s.mid_fraction = value.get<double>();
      else if (key == "inner_radius_mm") s.inner_radius_mm = value.get<double>();
      else if (key == "wm_depth_mm") s.wm_depth_mm = value.get<double>();
      else if (key == "fold_amplitude_mm") s.fold_amplitude_mm = value.get<double>();
      else if (key == "fold_wavelength_mm") s.fold_wavelength_mm = value.get<double>();
      else if (key == "fissure_depth_mm") s.fissure_depth_mm = value.get<double>();
      else if (key == "fissure_width_voxels") s.fissure_width_voxels = value.get<double>();
      else if (key == "purkinje_width_voxels") s.purkinje_width_voxels = value.get<double>();
      else if (key == "noise_sigma") s.noise_sigma = value.get<double>();
      else if (key == "pv_sigma_voxels") s.pv_sigma_voxels = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else if (key == "regions") s.regions = value.get<int>();
      else if (key == "supersample") s.supersample = value.get<int>();
      else if (key == "intensities") {
        for (const auto& [ik, iv] : value.items()) {
          const double v = iv.get<double>();
          if (ik == "background") s.intensities.background = v;
          else if (ik == "wm") s.intensities.wm = v;
          else if (ik == "granular") s.intensities.granular = v;
          else if (ik == "purkinje") s.intensities.purkinje = v;
          else if (ik == "molecular") s.intensities.molecular = v;
          else fail(ErrorKind::parameter, "phantom spec: unknown intensity '" + ik + "'");
        }
      } else {
        fail(ErrorKind::parameter, "phantom spec: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("phantom spec: ") + e.what());
  }
  s.validate();
  return s;
}

Phantom generate(const PhantomSpec& spec) {
  spec.validate();
  const Model model(spec);
  const Geometry g{spec.dims, spec.spacing};
  const std::size_t n = g.voxel_count();
  const int ss = spec.supersample;

  Phantom out;
  out.image = ScalarVolume(g);
  Truth& t = out.truth;
  t.wm = MaskVolume(g);
  t.gm = MaskVolume(g);
  t.mid_layer = MaskVolume(g);
  t.fissure = MaskVolume(g);
  t.t_gm = ScalarVolume(g);
  t.t_gran = ScalarVolume(g);
  t.t_mol = ScalarVolume(g);
  t.depth = ScalarVolume(g);
  t.normal = VectorField(g);
  LabelVolume inner(g);  // 1 where GM lies below the mid-layer depth

  const double fissure_half = 0.5 * spec.fissure_width_voxels * spec.spacing[0];
  const bool has_fissure = spec.kind == Kind::folded_sheet && spec.fissure_depth_mm > 0.0;

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Index3 c = g.coords(i);
      const Vec3 p = position(g, c[0], c[1], c[2]);

      double acc = 0.0;
      for (int sz = 0; sz < ss; ++sz) {
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const Vec3 q{p[0] + ((sx + 0.5) / ss - 0.5) * g.spacing[0],
                         p[1] + ((sy + 0.5) / ss - 0.5) * g.spacing[1],
                         p[2] + ((sz + 0.5) / ss - 0.5) * g.spacing[2]};
            acc += model.intensity(model.classify(q));
          }
        }
      }
      out.image[i] = acc / (ss * ss * ss);

      const auto l = model.local(p);
      t.depth[i] = l.depth;
      t.normal[i] = l.normal;
      if (l.depth < 0.0) {
        t.wm[i] = 1;
      } else if (l.depth < l.thickness) {
        t.gm[i] = 1;
        t.t_gm[i] = l.thickness;
        t.t_gran[i] = spec.mid_fraction * l.thickness;
        t.t_mol[i] = (1.0 - spec.mid_fraction) * l.thickness;
        const double off = l.depth - spec.mid_fraction * l.thickness;
        inner[i] = off < 0.0 ? 1 : 0;
        // A voxel belongs to the digitised sheet when the surface crosses its
        // cube; the half-open test keeps a single layer when it hits a face.
        double reach = 0.0;
        for (int a = 0; a < 3; ++a) reach += std::abs(l.normal[a]) * g.spacing[a];
        reach *= 0.5;
        if (off > -reach && off <= reach) t.mid_layer[i] = 1;
        if (has_fissure && p[0] - model.trough_x() > -0.5 * g.spacing[0] &&
            p[0] - model.trough_x() <= 0.5 * g.spacing[0] && fissure_half > 0.0 &&
            p[2] >= model.fissure_top() - spec.fissure_depth_mm) {
          t.fissure[i] = 1;
        }
      }
    }
  });
  t.tiv_mm3 = model.tiv();

  if (spec.pv_sigma_voxels > 0.0) out.image = gaussian_smooth(out.image, spec.pv_sigma_voxels);
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (std::size_t i = 0; i < n; ++i) out.image[i] += noise(rng);
  }

  out.brain_mask = morphology(mask_or(t.wm, t.gm), MorphOp::dilate, 26);

  // Soft priors: blurred one-hot truth with a small floor, renormalised per voxel.
  constexpr int kClasses = 4;
  constexpr double kFloor = 0.01;
  out.priors.assign(kClasses, ScalarVolume(g));
  for (std::size_t i = 0; i < n; ++i) {
    int k = 0;
    if (t.wm[i]) k = 1;
    else if (t.gm[i]) k = inner[i] ? 2 : 3;
    out.priors[k][i] = 1.0;
  }
  for (auto& p : out.priors) p = gaussian_smooth(p, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (auto& p : out.priors) {
      p[i] = std::max(p[i], 0.0) + kFloor;
      sum += p[i];
    }
    for (auto& p : out.priors) p[i] /= sum;
  }

  out.parcellation = LabelVolume(g);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.brain_mask[i]) continue;
    const int x = g.coords(i)[0];
    out.parcellation[i] = 1 + static_cast<int>(static_cast<long long>(x) * spec.regions / spec.dims[0]);
  }
  return out;
}

void write_phantom(const Phantom& p, const PhantomSpec& spec, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory '" + dir + "': " + ec.message());
  const fs::path d(dir);
  write_volume(p.image, (d / "image.nii").string());
  write_mask(p.brain_mask, (d / "mask.nii").string());
  for (std::size_t k = 0; k < p.priors.size(); ++k) {
    write_volume(p.priors[k], (d / ("prior_" + std::to_string(k) + ".nii")).string());
  }
  write_labels(p.parcellation, (d / "parcellation.nii").string());
  const Truth& t = p.truth;
  write_mask(t.wm, (d / "truth_wm.nii").string());
  write_mask(t.gm, (d / "truth_gm.nii").string());
  write_mask(t.mid_layer, (d / "truth_mid.nii").string());
  write_mask(t.fissure, (d / "truth_fissure.nii").string());
  write_volume(t.t_gm, (d / "truth_tgm.nii").string());
  write_volume(t.t_gran, (d / "truth_tgran.nii").string());
  write_volume(t.t_mol, (d / "truth_tmol.nii").string());

  nlohmann::json j;
  j["spec"] = nlohmann::json::parse(spec.to_json());
  j["tiv_mm3"] = t.tiv_mm3;
  j["class_map"] = {"other", "wm", "gm", "gm"};
  write_file((d / "truth.json").string(), j.dump(2) + "\n");
}

}  // namespace laminar::phantom
