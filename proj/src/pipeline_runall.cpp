#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>

#include "laminar/parallel.hpp"
#include "laminar/region.hpp"
#include "laminar/volume_io.hpp"
#include "pipeline_internal.hpp"

namespace laminar::pipeline::detail {

namespace {

namespace fs = std::filesystem;

struct SubjectRegion {
  std::size_t gm_voxels = 0;
  std::size_t sheet_voxels = 0;
  double sum_tgm = 0.0, sum_tgran = 0.0, sum_tmol = 0.0;
  double area = 0.0;
};

struct SubjectStats {
  std::string id;
  std::string group;
  double tiv = 0.0;
  double voxel_volume = 0.0;
  std::map<int, SubjectRegion> regions;
};

std::string thickness_file(const std::string& prefix, const char* suffix) { return prefix + suffix + ".nii"; }

SubjectStats load_subject(const json& s) {
  static const std::vector<std::string> allowed{"id", "group", "parcellation", "gm", "mpf", "thickness", "tiv_mm3", "mask"};
  for (const auto& [key, value] : s.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorKind::usage, "stats: unknown subject key '" + key + "'");
    }
  }
  SubjectStats out;
  out.id = need_string(s, "id", "stats");
  out.group = optional_string(s, "group");
  const LabelVolume parc = io::read_labels(need_string(s, "parcellation", "stats"));
  const MaskVolume gm = io::read_mask(need_string(s, "gm", "stats"));
  const MaskVolume mpf = io::read_mask(need_string(s, "mpf", "stats"));
  const std::string tp = need_string(s, "thickness", "stats");
  const ScalarVolume tgm = io::read_volume(thickness_file(tp, "_tgm"));
  const ScalarVolume dwm = io::read_volume(thickness_file(tp, "_dwm"));
  const ScalarVolume dpial = io::read_volume(thickness_file(tp, "_dpial"));
  const ScalarVolume vx = io::read_volume(thickness_file(tp, "_vhatx"));
  const ScalarVolume vy = io::read_volume(thickness_file(tp, "_vhaty"));
  const ScalarVolume vz = io::read_volume(thickness_file(tp, "_vhatz"));
  for (const auto* v : {&tgm, &dwm, &dpial, &vx, &vy, &vz}) require_same_geometry(gm, *v, "stats thickness maps");
  require_same_geometry(gm, parc, "stats parcellation");
  require_same_geometry(gm, mpf, "stats M_PF");
  const auto& g = gm.geometry();
  out.voxel_volume = g.voxel_volume();

  if (s.contains("tiv_mm3") && !s.at("tiv_mm3").is_null()) {
    out.tiv = s.at("tiv_mm3").get<double>();
  } else {
    const std::string mask = optional_string(s, "mask");
    if (mask.empty()) fail(ErrorKind::usage, "stats: subject '" + out.id + "' needs tiv_mm3 or mask");
    out.tiv = static_cast<double>(count_set(io::read_mask(mask))) * g.voxel_volume();
  }

  std::map<int, MaskVolume> sheets;
  VectorField normal(g);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    const int l = parc[i];
    if (l <= 0) continue;
    auto& r = out.regions[l];
    if (gm[i]) ++r.gm_voxels;
    if (mpf[i] && gm[i]) {
      ++r.sheet_voxels;
      r.sum_tgm += tgm[i];
      r.sum_tgran += dwm[i];
      r.sum_tmol += dpial[i];
      auto it = sheets.find(l);
      if (it == sheets.end()) it = sheets.emplace(l, MaskVolume(g)).first;
      it->second[i] = 1;
      normal[i] = {vx[i], vy[i], vz[i]};
    }
  }
  for (auto& [l, sheet] : sheets) out.regions[l].area = region::purkinje_area(sheet, normal).area_mm2;
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

StageResult stage_stats(const std::string& text) {
  const json args = parse_args(text, {"subjects", "out", "region_names", "params"}, "stats");
  const std::string out = need_string(args, "out", "stats");
  const Params p = params_from(args);
  const auto mode = region::parse_tiv_mode(p.tiv_mode);
  if (!args.contains("subjects") || !args.at("subjects").is_array() || args.at("subjects").empty()) {
    fail(ErrorKind::usage, "stats: 'subjects' must be a non-empty array");
  }
  std::vector<std::string> inputs;
  for (const auto& s : args.at("subjects")) {
    if (!s.is_object()) fail(ErrorKind::usage, "stats: each subject must be an object");
    for (const char* k : {"parcellation", "gm", "mpf", "mask"}) {
      const std::string path = optional_string(s, k);
      if (!path.empty()) inputs.push_back(path);
    }
    const std::string tp = optional_string(s, "thickness");
    if (!tp.empty()) {
      for (const char* suf : {"_tgm", "_dwm", "_dpial", "_vhatx", "_vhaty", "_vhatz"}) {
        inputs.push_back(thickness_file(tp, suf));
      }
    }
  }
  require_inputs(inputs, "stats");

  json result = begin_stage("stats", {{"subjects", args.at("subjects")}}, p);
  std::vector<SubjectStats> subjects;
  for (const auto& s : args.at("subjects")) subjects.push_back(load_subject(s));

  std::set<int> labels;
  std::set<std::string> groups;
  for (const auto& s : subjects) {
    for (const auto& [l, r] : s.regions) labels.insert(l);
    if (!s.group.empty()) groups.insert(s.group);
  }
  const bool test = groups.size() == 2;
  const std::string ga = test ? *groups.begin() : std::string();
  const std::string gb = test ? *groups.rbegin() : std::string();

  io::RegionReport report;
  std::vector<double> pvals;
  std::vector<std::size_t> tested_rows;
  for (int l : labels) {
    io::RegionRow row;
    row.region_id = l;
    row.region_name = "region_" + std::to_string(l);
    if (args.contains("region_names")) {
      const auto& names = args.at("region_names");
      const std::string key = std::to_string(l);
      if (names.contains(key)) row.region_name = names.at(key).get<std::string>();
    }
    std::vector<double> nvox, vol, tgm, tgran, tmol, area;
    std::vector<double> a, b;
    for (const auto& s : subjects) {
      const auto it = s.regions.find(l);
      const SubjectRegion r = it == s.regions.end() ? SubjectRegion{} : it->second;
      nvox.push_back(static_cast<double>(r.gm_voxels));
      vol.push_back(static_cast<double>(r.gm_voxels) * s.voxel_volume);
      area.push_back(r.area);
      if (r.sheet_voxels == 0) continue;
      const double n = static_cast<double>(r.sheet_voxels);
      tgm.push_back(r.sum_tgm / n);
      tgran.push_back(r.sum_tgran / n);
      tmol.push_back(r.sum_tmol / n);
      const double measure = p.stat_measure == "TGran" ? tgran.back() : p.stat_measure == "TMol" ? tmol.back() : tgm.back();
      if (test && s.group == ga) a.push_back(region::tiv_normalize(measure, s.tiv, mode));
      if (test && s.group == gb) b.push_back(region::tiv_normalize(measure, s.tiv, mode));
    }
    row.n_voxels = static_cast<std::size_t>(std::llround(mean_of(nvox)));
    row.volume_mm3 = mean_of(vol);
    row.purkinje_area_mm2 = mean_of(area);
    if (!tgm.empty()) {
      row.mean_tgm = mean_of(tgm);
      row.mean_tgran = mean_of(tgran);
      row.mean_tmol = mean_of(tmol);
    }
    if (test) {
      if (!a.empty()) row.group_mean_a = mean_of(a);
      if (!b.empty()) row.group_mean_b = mean_of(b);
      if (const auto w = region::welch_test(a, b)) {
        row.t_stat = w->t;
        row.p_value = w->p;
        pvals.push_back(w->p);
        tested_rows.push_back(report.rows.size());
      }
    }
    report.rows.push_back(row);
  }
  const auto significant = region::fdr_correct(pvals, p.fdr_q);
  for (std::size_t k = 0; k < tested_rows.size(); ++k) report.rows[tested_rows[k]].fdr_significant = significant[k];

  prepare_output(out);
  io::write_region_report(report, out);
  add_artifact(result["artifacts"], "region_report", out, "stats", json::parse(p.to_json()));
  result["groups"] = test ? json{ga, gb} : json::array();
  result["regions"] = report.rows.size();
  result["significant_regions"] = std::count(significant.begin(), significant.end(), true);
  return finish_stage(result, out + ".provenance.json", true);
}

// ------------------------------------------------------------------ run-all

StageResult stage_run_all(const std::string& text) {
  const json cfg = parse_args(text, {"output_dir", "subjects", "region_names", "params", "workers"}, "run-all");
  const std::string dir = need_string(cfg, "output_dir", "run-all");
  const Params p = params_from(cfg);
  const json pj = json::parse(p.to_json());
  if (cfg.contains("workers")) set_worker_count(cfg.at("workers").get<int>());
  if (!cfg.contains("subjects") || !cfg.at("subjects").is_array() || cfg.at("subjects").empty()) {
    fail(ErrorKind::usage, "run-all: 'subjects' must be a non-empty array");
  }

  struct Subject {
    std::string id, image, mask, parcellation, group;
    std::vector<std::string> priors;
    std::optional<double> tiv;
  };
  std::vector<Subject> subjects;
  std::vector<std::string> inputs;
  std::set<std::string> ids;
  static const std::vector<std::string> allowed{"id", "image", "mask", "priors", "parcellation", "group", "tiv_mm3"};
  for (const auto& s : cfg.at("subjects")) {
    if (!s.is_object()) fail(ErrorKind::usage, "run-all: each subject must be an object");
    for (const auto& [key, value] : s.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        fail(ErrorKind::usage, "run-all: unknown subject key '" + key + "'");
      }
    }
    Subject sub;
    sub.id = need_string(s, "id", "run-all");
    if (!ids.insert(sub.id).second) fail(ErrorKind::usage, "run-all: duplicate subject id '" + sub.id + "'");
    sub.image = need_string(s, "image", "run-all");
    sub.mask = need_string(s, "mask", "run-all");
    sub.parcellation = need_string(s, "parcellation", "run-all");
    sub.group = optional_string(s, "group");
    if (s.contains("priors") && !s.at("priors").is_null()) sub.priors = need_strings(s, "priors", "run-all");
    if (s.contains("tiv_mm3") && !s.at("tiv_mm3").is_null()) sub.tiv = s.at("tiv_mm3").get<double>();
    for (const auto& f : {sub.image, sub.mask, sub.parcellation}) inputs.push_back(f);
    inputs.insert(inputs.end(), sub.priors.begin(), sub.priors.end());
    subjects.push_back(sub);
  }
  require_inputs(inputs, "run-all");

  json manifest{{"params", pj}, {"artifacts", json::array()}, {"flat_priors", json::object()}, {"stages", json::array()}};
  const auto manifest_path = (fs::path(dir) / "manifest.json").string();
  json params_only{{"params", pj}};
  auto run = [&](const char* stage, const json& args) {
    const StageResult r = run_stage(stage, args.dump());
    const json rj = json::parse(r.json);
    for (const auto& a : rj.at("artifacts")) manifest["artifacts"].push_back(a);
    manifest["stages"].push_back({{"stage", stage}, {"converged", r.converged}});
    if (!r.converged) {
      manifest["aborted_at"] = stage;
      write_json(manifest_path, manifest);
    }
    return r;
  };
  auto sub_dir = [&](const Subject& s) { return (fs::path(dir) / s.id).string(); };
  auto in_sub = [&](const Subject& s, const char* name) { return (fs::path(sub_dir(s)) / name).string(); };

  json std_args{{"images", json::array()}, {"masks", json::array()}, {"outputs", json::array()},
                {"model_out", (fs::path(dir) / "landmarks.json").string()}, {"params", pj}};
  for (const auto& s : subjects) {
    std_args["images"].push_back(s.image);
    std_args["masks"].push_back(s.mask);
    std_args["outputs"].push_back(in_sub(s, "standardized.nii"));
  }
  if (!run("standardize", std_args).converged) return {manifest.dump(), false};

  json stats_subjects = json::array();
  for (const auto& s : subjects) {
    const std::string image = in_sub(s, "standardized.nii");
    json seg{{"image", image}, {"mask", s.mask}, {"out", in_sub(s, "seg")}, {"params", pj}};
    if (!s.priors.empty()) seg["priors"] = s.priors;
    manifest["flat_priors"][s.id] = s.priors.empty();
    if (!run("segment", seg).converged) return {manifest.dump(), false};
    const std::string wm = in_sub(s, "seg_wm.nii"), gm = in_sub(s, "seg_gm.nii");
    if (!run("fissures", {{"image", image}, {"wm", wm}, {"gm", gm}, {"out", in_sub(s, "fis")}, {"params", pj}}).converged) {
      return {manifest.dump(), false};
    }
    const std::string pial = in_sub(s, "fis_pial.nii");
    const std::string thk = in_sub(s, "thk");
    if (!run("thickness", {{"gm", gm}, {"wm", wm}, {"pial", pial}, {"out", thk}, {"params", pj}}).converged) {
      return {manifest.dump(), false};
    }
    run("purkinje", {{"image", image}, {"gm", gm}, {"wm", wm}, {"pial", pial}, {"thickness", thk},
                     {"out", in_sub(s, "pk")}, {"params", pj}});
    run("sublayers", {{"mpf", in_sub(s, "pk_mpf.nii")}, {"gm", gm}, {"wm", wm}, {"pial", pial}, {"thickness", thk},
                      {"out", in_sub(s, "sublayers.csv")}});
    json st{{"id", s.id}, {"parcellation", s.parcellation}, {"gm", gm}, {"mpf", in_sub(s, "pk_mpf.nii")}, {"thickness", thk}};
    if (!s.group.empty()) st["group"] = s.group;
    if (s.tiv) st["tiv_mm3"] = *s.tiv;
    else st["mask"] = s.mask;
    stats_subjects.push_back(st);
  }
  json stats{{"subjects", stats_subjects}, {"out", (fs::path(dir) / "report.csv").string()}, {"params", pj}};
  if (cfg.contains("region_names")) stats["region_names"] = cfg.at("region_names");
  const StageResult sr = run("stats", stats);
  manifest["report"] = json::parse(sr.json);
  write_json(manifest_path, manifest);
  log_event({{"event", "run_all_done"}, {"manifest", manifest_path}});
  return {manifest.dump(), true};
}

}  // namespace laminar::pipeline::detail
