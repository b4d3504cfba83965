#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "laminar/fissure.hpp"
#include "laminar/phantom.hpp"
#include "laminar/purkinje.hpp"
#include "laminar/region.hpp"
#include "laminar/segment.hpp"
#include "laminar/standardize.hpp"
#include "laminar/thickness.hpp"
#include "laminar/volume_io.hpp"
#include "pipeline_internal.hpp"

namespace laminar::pipeline::detail {

namespace {

using io::read_labels;
using io::read_mask;
using io::read_volume;


std::string suffixed(const std::string& prefix, const char* suffix) { return prefix + suffix + ".nii"; }

void write_scalar(const ScalarVolume& v, const std::string& path) {
  prepare_output(path);
  io::write_volume(v, path);
}

void write_binary(const MaskVolume& m, const std::string& path) {
  prepare_output(path);
  io::write_mask(m, path);
}

struct LoadedBundle {
  thickness::ThicknessBundle bundle;
  MaskVolume wm;
  MaskVolume gm;
};

std::vector<std::string> bundle_files(const std::string& prefix) {
  return {suffixed(prefix, "_vhatx"), suffixed(prefix, "_vhaty"), suffixed(prefix, "_vhatz"),
          suffixed(prefix, "_dwm"),   suffixed(prefix, "_dpial"), suffixed(prefix, "_tgm")};
}

LoadedBundle load_bundle(const std::string& gm_path, const std::string& wm_path, const std::string& pial_path,
                         const std::string& prefix) {
  LoadedBundle lb;
  lb.gm = read_mask(gm_path);
  lb.wm = read_mask(wm_path);
  const MaskVolume pial = read_mask(pial_path);
  lb.bundle = thickness::prepare_bundle(lb.gm, lb.wm, pial);
  auto& b = lb.bundle;
  const auto vx = read_volume(suffixed(prefix, "_vhatx"));
  const auto vy = read_volume(suffixed(prefix, "_vhaty"));
  const auto vz = read_volume(suffixed(prefix, "_vhatz"));
  require_same_geometry(lb.gm, vx, "thickness direction field");
  b.vhat.direction = VectorField(lb.gm.geometry());
  b.vhat.degenerate = MaskVolume(lb.gm.geometry());
  for (std::size_t i = 0; i < vx.size(); ++i) {
    Vec3 v{vx[i], vy[i], vz[i]};
    const double n = norm(v);
    if (n > 0.0) v = {v[0] / n, v[1] / n, v[2] / n};
    else if (b.domain[i]) b.vhat.degenerate[i] = 1;
    b.vhat.direction[i] = v;
  }
  b.streams.d_wm = read_volume(suffixed(prefix, "_dwm"));
  b.streams.d_pial = read_volume(suffixed(prefix, "_dpial"));
  b.t_gm = read_volume(suffixed(prefix, "_tgm"));
  require_same_geometry(lb.gm, b.streams.d_wm, "thickness D_WM");
  require_same_geometry(lb.gm, b.streams.d_pial, "thickness D_Pial");
  require_same_geometry(lb.gm, b.t_gm, "thickness T_GM");
  return lb;
}

std::vector<tissue::TissueClass> class_map_of(const Params& p) {
  std::vector<tissue::TissueClass> out;
  for (const auto& name : p.class_map) out.push_back(tissue::parse_tissue_class(name));
  if (static_cast<int>(out.size()) != p.em_classes) {
    fail(ErrorKind::usage, "class_map must list one tissue per class (" + std::to_string(p.em_classes) + ")");
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------------ phantom

StageResult stage_phantom(const std::string& text) {
  const json args = parse_args(text, {"spec", "out"}, "phantom");
  const std::string out = need_string(args, "out", "phantom");
  if (!args.contains("spec")) fail(ErrorKind::usage, "phantom: missing argument 'spec'");
  std::string spec_text;
  if (args.at("spec").is_string()) {
    const std::string path = args.at("spec").get<std::string>();
    require_inputs({path}, "phantom");
    const auto bytes = io::read_file(path);
    spec_text.assign(bytes.begin(), bytes.end());
  } else {
    spec_text = args.at("spec").dump();
  }
  const auto spec = phantom::PhantomSpec::from_json(spec_text);
  Params none;
  json result = begin_stage("phantom", {{"spec", json::parse(spec.to_json())}}, none);
  const auto ph = phantom::generate(spec);
  phantom::write_phantom(ph, spec, out);
  const json sp = json::parse(spec.to_json());
  namespace fs = std::filesystem;
  std::vector<std::string> names{"image", "mask", "parcellation", "truth_wm", "truth_gm", "truth_mid", "truth_fissure",
                                 "truth_tgm", "truth_tgran", "truth_tmol"};
  for (std::size_t k = 0; k < ph.priors.size(); ++k) names.push_back("prior_" + std::to_string(k));
  for (const auto& n : names) {
    add_artifact(result["artifacts"], n, (fs::path(out) / (n + ".nii")).string(), "phantom", sp);
  }
  add_artifact(result["artifacts"], "truth", (fs::path(out) / "truth.json").string(), "phantom", sp);
  result["tiv_mm3"] = ph.truth.tiv_mm3;
  return finish_stage(result, (fs::path(out) / "phantom.provenance.json").string(), true);
}

// -------------------------------------------------------------- standardize

StageResult stage_standardize(const std::string& text) {
  const json args = parse_args(text, {"images", "masks", "outputs", "model", "model_out", "params"}, "standardize");
  const auto images = need_strings(args, "images", "standardize");
  const auto masks = need_strings(args, "masks", "standardize");
  const auto outputs = need_strings(args, "outputs", "standardize");
  const std::string model_in = optional_string(args, "model");
  const std::string model_out = optional_string(args, "model_out");
  if (images.empty() || images.size() != masks.size() || images.size() != outputs.size()) {
    fail(ErrorKind::usage, "standardize: images, masks and outputs must be non-empty and of equal length");
  }
  if (model_in.empty() && model_out.empty()) {
    fail(ErrorKind::usage, "standardize: give 'model' to apply or 'model_out' to train");
  }
  const Params p = params_from(args);
  std::vector<std::string> inputs = images;
  inputs.insert(inputs.end(), masks.begin(), masks.end());
  if (!model_in.empty()) inputs.push_back(model_in);
  require_inputs(inputs, "standardize");

  json result = begin_stage("standardize", {{"images", images}, {"masks", masks}, {"model", model_in}}, p);
  std::vector<ScalarVolume> vols;
  std::vector<MaskVolume> ms;
  for (std::size_t s = 0; s < images.size(); ++s) {
    vols.push_back(read_volume(images[s]));
    ms.push_back(read_mask(masks[s]));
  }
  intensity::LandmarkModel model;
  if (!model_in.empty()) {
    const auto bytes = io::read_file(model_in);
    model = intensity::LandmarkModel::from_json(std::string(bytes.begin(), bytes.end()));
  } else {
    model = intensity::train_landmarks(vols, ms, p.scale_lo, p.scale_hi);
  }
  const json pj = json::parse(p.to_json());
  if (!model_out.empty()) {
    prepare_output(model_out);
    io::write_file(model_out, model.to_json() + "\n");
    add_artifact(result["artifacts"], "landmark_model", model_out, "standardize", pj);
  }
  for (std::size_t s = 0; s < images.size(); ++s) {
    write_scalar(intensity::standardize(vols[s], ms[s], model), outputs[s]);
    add_artifact(result["artifacts"], "standardized", outputs[s], "standardize", pj);
  }
  result["model"] = json::parse(model.to_json());
  const std::string prov = (model_out.empty() ? outputs.front() : model_out) + ".provenance.json";
  return finish_stage(result, prov, true);
}

// ------------------------------------------------------------------ segment

StageResult stage_segment(const std::string& text) {
  const json args = parse_args(text, {"image", "mask", "priors", "out", "params"}, "segment");
  const std::string image = need_string(args, "image", "segment");
  const std::string mask = need_string(args, "mask", "segment");
  const std::string out = need_string(args, "out", "segment");
  const Params p = params_from(args);
  std::vector<std::string> priors;
  if (args.contains("priors") && !args.at("priors").is_null()) priors = need_strings(args, "priors", "segment");
  const auto cmap = class_map_of(p);
  if (!priors.empty() && static_cast<int>(priors.size()) != p.em_classes) {
    fail(ErrorKind::usage, "segment: expected " + std::to_string(p.em_classes) + " prior volumes");
  }
  std::vector<std::string> inputs{image, mask};
  inputs.insert(inputs.end(), priors.begin(), priors.end());
  require_inputs(inputs, "segment");

  const bool flat = priors.empty();
  json result = begin_stage("segment", {{"image", image}, {"mask", mask}, {"priors", priors}, {"flat_priors", flat}}, p);
  const ScalarVolume v = read_volume(image);
  const MaskVolume m = read_mask(mask);
  require_same_geometry(v, m, "segment mask");
  std::vector<ScalarVolume> pri;
  if (flat) {
    pri.assign(static_cast<std::size_t>(p.em_classes), ScalarVolume(v.geometry(), 1.0 / p.em_classes));
  } else {
    for (const auto& path : priors) pri.push_back(read_volume(path));
  }
  tissue::EmOptions eo;
  eo.classes = p.em_classes;
  eo.tol = p.em_tol;
  eo.max_iter = p.em_max_iter;
  const auto em = tissue::fit_em(v, m, pri, eo);
  const auto seg = tissue::hard_segment(em.posteriors, m, cmap);

  json pj = json::parse(p.to_json());
  pj["flat_priors"] = flat;
  auto& arts = result["artifacts"];
  write_binary(seg.wm, suffixed(out, "_wm"));
  add_artifact(arts, "wm", suffixed(out, "_wm"), "segment", pj);
  write_binary(seg.gm, suffixed(out, "_gm"));
  add_artifact(arts, "gm", suffixed(out, "_gm"), "segment", pj);
  io::write_labels(seg.labels, suffixed(out, "_labels"));
  add_artifact(arts, "labels", suffixed(out, "_labels"), "segment", pj);
  for (std::size_t k = 0; k < em.posteriors.size(); ++k) {
    const std::string path = out + "_posterior" + std::to_string(k) + ".nii";
    write_scalar(em.posteriors[k], path);
    add_artifact(arts, "posterior" + std::to_string(k), path, "segment", pj);
  }
  json classes = json::array();
  for (const auto& c : em.classes) {
    classes.push_back({{"mean", c.mean}, {"variance", c.variance}, {"degenerate", c.degenerate}});
  }
  result["flat_priors"] = flat;
  result["classes"] = classes;
  result["iterations"] = em.iterations;
  result["log_likelihood"] = em.log_likelihood;
  result["degenerate_warning"] = em.degenerate_warning;
  result["variance_floor"] = em.variance_floor;
  return finish_stage(result, out + "_segment.json", em.converged);
}

// ----------------------------------------------------------------- fissures

StageResult stage_fissures(const std::string& text) {
  const json args = parse_args(text, {"image", "wm", "gm", "out", "params"}, "fissures");
  const std::string image = need_string(args, "image", "fissures");
  const std::string wm = need_string(args, "wm", "fissures");
  const std::string gm = need_string(args, "gm", "fissures");
  const std::string out = need_string(args, "out", "fissures");
  const Params p = params_from(args);
  require_inputs({image, wm, gm}, "fissures");

  json result = begin_stage("fissures", {{"image", image}, {"wm", wm}, {"gm", gm}}, p);
  const auto fr = fissure::extract_fissures(read_volume(image), read_mask(wm), read_mask(gm), p.fissure_sigma);
  ScalarVolume distance = fr.geodesic.distance;
  for (auto& d : distance.data()) {
    if (!std::isfinite(d)) d = -1.0;  // unreachable or outside the domain
  }
  const json pj = json::parse(p.to_json());
  auto& arts = result["artifacts"];
  write_binary(fr.fissures, suffixed(out, "_fissures"));
  add_artifact(arts, "fissures", suffixed(out, "_fissures"), "fissures", pj);
  write_binary(fr.pial, suffixed(out, "_pial"));
  add_artifact(arts, "pial", suffixed(out, "_pial"), "fissures", pj);
  write_scalar(distance, suffixed(out, "_geodesic"));
  add_artifact(arts, "geodesic", suffixed(out, "_geodesic"), "fissures", pj);
  result["fissure_voxels"] = count_set(fr.fissures);
  result["unreachable_voxels"] = count_set(fr.geodesic.unreachable);
  return finish_stage(result, out + "_fissures.json", true);
}

// ---------------------------------------------------------------- thickness

StageResult stage_thickness(const std::string& text) {
  const json args = parse_args(text, {"gm", "wm", "pial", "out", "params"}, "thickness");
  const std::string gm = need_string(args, "gm", "thickness");
  const std::string wm = need_string(args, "wm", "thickness");
  const std::string pial = need_string(args, "pial", "thickness");
  const std::string out = need_string(args, "out", "thickness");
  const Params p = params_from(args);
  require_inputs({gm, wm, pial}, "thickness");

  json result = begin_stage("thickness", {{"gm", gm}, {"wm", wm}, {"pial", pial}}, p);
  thickness::ThicknessOptions o;
  o.laplace_tol = p.laplace_tol;
  o.laplace_max_iter = p.laplace_max_iter;
  o.stream_tol = p.stream_tol;
  o.stream_max_iter = p.stream_max_iter;
  const auto b = thickness::compute_thickness(read_mask(gm), read_mask(wm), read_mask(pial), o);

  json pj = json::parse(p.to_json());
  pj["converged"] = b.converged();
  auto& arts = result["artifacts"];
  const auto& g = b.t_gm.geometry();
  write_scalar(b.laplace.psi, suffixed(out, "_psi"));
  add_artifact(arts, "psi", suffixed(out, "_psi"), "thickness", pj);
  const char* axes[3] = {"_vhatx", "_vhaty", "_vhatz"};
  for (int a = 0; a < 3; ++a) {
    ScalarVolume c(g);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = b.vhat.direction[i][static_cast<std::size_t>(a)];
    write_scalar(c, suffixed(out, axes[a]));
    add_artifact(arts, std::string("vhat") + "xyz"[a], suffixed(out, axes[a]), "thickness", pj);
  }
  write_scalar(b.streams.d_wm, suffixed(out, "_dwm"));
  add_artifact(arts, "d_wm", suffixed(out, "_dwm"), "thickness", pj);
  write_scalar(b.streams.d_pial, suffixed(out, "_dpial"));
  add_artifact(arts, "d_pial", suffixed(out, "_dpial"), "thickness", pj);
  write_scalar(b.t_gm, suffixed(out, "_tgm"));
  add_artifact(arts, "t_gm", suffixed(out, "_tgm"), "thickness", pj);
  write_binary(b.streams.flagged, suffixed(out, "_flagged"));
  add_artifact(arts, "flagged", suffixed(out, "_flagged"), "thickness", pj);

  result["laplace"] = {{"iterations", b.laplace.iterations},
                       {"converged", b.laplace.converged},
                       {"last_update", b.laplace.last_update}};
  result["streamlines"] = {{"sweeps", b.streams.sweeps},
                           {"converged", b.streams.converged},
                           {"flagged_voxels", count_set(b.streams.flagged)}};
  result["degenerate_direction_voxels"] = count_set(b.vhat.degenerate);
  return finish_stage(result, out + "_thickness.json", b.converged());
}

// ----------------------------------------------------------------- purkinje

StageResult stage_purkinje(const std::string& text) {
  const json args = parse_args(text, {"image", "gm", "wm", "pial", "thickness", "out", "params"}, "purkinje");
  const std::string image = need_string(args, "image", "purkinje");
  const std::string gm = need_string(args, "gm", "purkinje");
  const std::string wm = need_string(args, "wm", "purkinje");
  const std::string pial = need_string(args, "pial", "purkinje");
  const std::string tprefix = need_string(args, "thickness", "purkinje");
  const std::string out = need_string(args, "out", "purkinje");
  const Params p = params_from(args);
  std::vector<std::string> inputs{image, gm, wm, pial};
  for (const auto& f : bundle_files(tprefix)) inputs.push_back(f);
  require_inputs(inputs, "purkinje");

  json result = begin_stage("purkinje", {{"image", image}, {"gm", gm}, {"wm", wm}, {"pial", pial}, {"thickness", tprefix}}, p);
  const auto lb = load_bundle(gm, wm, pial, tprefix);
  const ScalarVolume img = read_volume(image);

  purkinje::PlanarFilterParams fp;
  fp.scale_mm = p.planar_scale;
  fp.alpha = p.planar_alpha;
  fp.beta = p.planar_beta;
  fp.c = p.planar_c;
  fp.tau_p = p.tau_p;
  const auto pr = purkinje::planar_response(img, lb.gm, fp);
  purkinje::InitialOptions io_opts;
  io_opts.tau_p = p.tau_p;
  io_opts.erosion_depth = p.erosion_depth;
  io_opts.min_component = static_cast<std::size_t>(p.min_component);
  const MaskVolume m_p0 = purkinje::initial_purkinje(pr, lb.bundle, lb.wm, io_opts);
  purkinje::ExtrapolationOptions eo;
  eo.levels = p.extrap_levels;
  eo.sigma_max = p.sigma_max;
  eo.sigma_min = p.sigma_min;
  eo.tau_lambda = p.tau_lambda;
  eo.mass_threshold = p.mass_threshold;
  const auto ex = purkinje::extrapolate_purkinje(m_p0, lb.bundle, eo);

  const json pj = json::parse(p.to_json());
  auto& arts = result["artifacts"];
  write_scalar(pr.response, suffixed(out, "_response"));
  add_artifact(arts, "planar_response", suffixed(out, "_response"), "purkinje", pj);
  write_binary(m_p0, suffixed(out, "_mp0"));
  add_artifact(arts, "m_p0", suffixed(out, "_mp0"), "purkinje", pj);
  write_binary(ex.m_pf, suffixed(out, "_mpf"));
  add_artifact(arts, "m_pf", suffixed(out, "_mpf"), "purkinje", pj);
  write_scalar(ex.r_wm, suffixed(out, "_rwm"));
  add_artifact(arts, "r_wm", suffixed(out, "_rwm"), "purkinje", pj);
  write_scalar(ex.lambda, suffixed(out, "_lambda"));
  add_artifact(arts, "lambda", suffixed(out, "_lambda"), "purkinje", pj);
  result["c_used"] = pr.c_used;
  result["m_p0_voxels"] = count_set(m_p0);
  result["m_pf_voxels"] = count_set(ex.m_pf);
  result["known_counts"] = ex.known_counts;
  return finish_stage(result, out + "_purkinje.json", true);
}

// ---------------------------------------------------------------- sublayers

StageResult stage_sublayers(const std::string& text) {
  const json args = parse_args(text, {"mpf", "gm", "wm", "pial", "thickness", "out"}, "sublayers");
  const std::string mpf = need_string(args, "mpf", "sublayers");
  const std::string gm = need_string(args, "gm", "sublayers");
  const std::string wm = need_string(args, "wm", "sublayers");
  const std::string pial = need_string(args, "pial", "sublayers");
  const std::string tprefix = need_string(args, "thickness", "sublayers");
  const std::string out = need_string(args, "out", "sublayers");
  std::vector<std::string> inputs{mpf, gm, wm, pial};
  for (const auto& f : bundle_files(tprefix)) inputs.push_back(f);
  require_inputs(inputs, "sublayers");

  Params none;
  json result = begin_stage("sublayers", {{"mpf", mpf}, {"gm", gm}, {"wm", wm}, {"pial", pial}, {"thickness", tprefix}}, none);
  const auto lb = load_bundle(gm, wm, pial, tprefix);
  const auto samples = purkinje::sublayer_thickness(read_mask(mpf), lb.bundle);
  std::ostringstream csv;
  csv.precision(9);
  csv << "x,y,z,TGran,TMol,TGM\n";
  double sum_gran = 0.0, sum_mol = 0.0;
  for (const auto& s : samples) {
    csv << s.voxel[0] << ',' << s.voxel[1] << ',' << s.voxel[2] << ',' << s.t_gran << ',' << s.t_mol << ','
        << s.t_gm << '\n';
    sum_gran += s.t_gran;
    sum_mol += s.t_mol;
  }
  prepare_output(out);
  io::write_file(out, csv.str());
  add_artifact(result["artifacts"], "sublayers", out, "sublayers", json::object());
  result["samples"] = samples.size();
  if (!samples.empty()) {
    result["mean_TGran"] = sum_gran / static_cast<double>(samples.size());
    result["mean_TMol"] = sum_mol / static_cast<double>(samples.size());
  }
  return finish_stage(result, out + ".provenance.json", true);
}

}  // namespace laminar::pipeline::detail
