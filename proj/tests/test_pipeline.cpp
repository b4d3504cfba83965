#include <doctest.h>

#include <laminar/error.hpp>
#include <laminar/fissure.hpp>
#include <laminar/pipeline.hpp>
#include <laminar/volume_io.hpp>

#include <json.hpp>

#include "test_support.hpp"

#include <filesystem>
#include <functional>

using namespace laminar;
using namespace laminar::pipeline;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json slab_spec(std::uint64_t seed, double noise) {
  return {{"kind", "slab"},      {"dims", {12, 12, 80}}, {"spacing", {0.1, 0.1, 0.1}}, {"thickness_mm", 4.0},
          {"seed", seed},        {"regions", 2},         {"noise_sigma", noise}};
}

void make_phantom(const fs::path& dir, std::uint64_t seed, double noise = 1.0) {
  run_stage("phantom", json{{"spec", slab_spec(seed, noise)}, {"out", dir.string()}}.dump());
}

json subject(const fs::path& ph, const std::string& id, bool priors) {
  json s{{"id", id},
         {"image", (ph / "image.nii").string()},
         {"mask", (ph / "mask.nii").string()},
         {"parcellation", (ph / "parcellation.nii").string()}};
  if (priors) {
    s["priors"] = json::array();
    for (int k = 0; k < 4; ++k) s["priors"].push_back((ph / ("prior_" + std::to_string(k) + ".nii")).string());
  }
  return s;
}

json run_config(const fs::path& out, json subjects, int workers) {
  return {{"output_dir", out.string()},
          {"subjects", std::move(subjects)},
          {"workers", workers},
          {"params", {{"planar_scale", 0.08}}}};
}

// Artifact name -> hash, ignoring paths so different output directories compare.
std::vector<std::pair<std::string, std::string>> hashes(const json& manifest) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& a : manifest.at("artifacts")) {
    out.emplace_back(a.at("artifact").get<std::string>(), a.at("sha256").get<std::string>());
  }
  return out;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::usage;
}

struct QuietLog {
  QuietLog() { set_log_stream(nullptr); }
};
const QuietLog quiet;

}  // namespace

TEST_CASE("parameter overrides are strict") {
  Params p;
  p.merge_json(R"({"tau_p": 0.3, "extrap_levels": 4, "class_map": ["other", "wm", "gm"]})");
  CHECK(p.tau_p == 0.3);
  CHECK(p.extrap_levels == 4);
  CHECK(p.class_map.size() == 3u);
  const auto echo = json::parse(p.to_json());
  CHECK(echo.at("tau_p") == 0.3);
  CHECK(kind_of([&] { p.merge_json(R"({"tau_q": 1})"); }) == ErrorKind::usage);
  CHECK(kind_of([&] { p.merge_json(R"({"tau_p": "high"})"); }) == ErrorKind::usage);
  Params round;
  round.merge_json(p.to_json());
  CHECK(round.to_json() == p.to_json());
}

TEST_CASE("exit codes follow the contract") {
  CHECK(exit_code_for(ErrorKind::usage) == 2);
  CHECK(exit_code_for(ErrorKind::parameter) == 2);
  CHECK(exit_code_for(ErrorKind::io) == 3);
  CHECK(exit_code_for(ErrorKind::format) == 3);
  CHECK(exit_code_for(ErrorKind::data) == 3);
  CHECK(exit_code_for(ErrorKind::convergence) == 4);
  CHECK(kind_of([] { run_stage("nonsense", "{}"); }) == ErrorKind::usage);
  CHECK(kind_of([] { run_stage("thickness", "not json"); }) == ErrorKind::usage);
}

TEST_CASE("missing input aborts before anything is written") {
  testing_support::TempDir dir("pipeline_missing");
  const auto out = dir.path() / "run";
  json s{{"id", "a"},
         {"image", (dir.path() / "absent.nii").string()},
         {"mask", (dir.path() / "absent_mask.nii").string()},
         {"parcellation", (dir.path() / "absent_parc.nii").string()}};
  CHECK(kind_of([&] { run_stage("run-all", run_config(out, json::array({s}), 1).dump()); }) == ErrorKind::io);
  CHECK((!fs::exists(out) || fs::is_empty(out)));
}

TEST_CASE("run-all is reproducible across reruns and worker counts") {
  testing_support::TempDir dir("pipeline_rerun");
  make_phantom(dir.path() / "ph", 1);
  const json subjects = json::array({subject(dir.path() / "ph", "s1", true)});

  const auto a = json::parse(run_stage("run-all", run_config(dir.path() / "a", subjects, 1).dump()).json);
  CHECK(a.at("flat_priors").at("s1") == false);
  REQUIRE(!a.at("artifacts").empty());
  const auto first = hashes(a);
  // Hashes recorded in the manifest are the hashes of the files on disk.
  for (const auto& art : a.at("artifacts")) {
    CHECK(sha256_file(art.at("path").get<std::string>()) == art.at("sha256").get<std::string>());
  }

  const auto b = json::parse(run_stage("run-all", run_config(dir.path() / "a", subjects, 1).dump()).json);
  CHECK(hashes(b) == first);
  const auto c = json::parse(run_stage("run-all", run_config(dir.path() / "c", subjects, 4).dump()).json);
  CHECK(hashes(c) == first);
  CHECK(fs::exists(dir.path() / "a" / "manifest.json"));
  CHECK(fs::exists(dir.path() / "a" / "report.csv"));
}

TEST_CASE("omitted priors fall back to flat priors and say so") {
  testing_support::TempDir dir("pipeline_priors");
  // Noise-free: with noise, flat-prior EM spends a class on outliers (see README).
  make_phantom(dir.path() / "ph", 2, 0.0);
  const json subjects = json::array({subject(dir.path() / "ph", "flat", false)});
  const auto m = json::parse(run_stage("run-all", run_config(dir.path() / "out", subjects, 1).dump()).json);
  CHECK(m.at("flat_priors").at("flat") == true);
}

TEST_CASE("thickness stage reports non-convergence but keeps its outputs") {
  testing_support::TempDir dir("pipeline_nonconv");
  const auto ph = dir.path() / "ph";
  run_stage("phantom", json{{"spec",
                             {{"kind", "spherical_shell"},
                              {"dims", {40, 40, 40}},
                              {"spacing", {1, 1, 1}},
                              {"inner_radius_mm", 6.0},
                              {"thickness_mm", 8.0}}},
                            {"out", ph.string()}}
                           .dump());
  const auto gm = io::read_mask((ph / "truth_gm.nii").string());
  const auto wm = io::read_mask((ph / "truth_wm.nii").string());
  const auto pial = (dir.path() / "pial.nii").string();
  io::write_mask(fissure::build_pial(gm, wm, MaskVolume(gm.geometry())), pial);
  const auto out = dir.path() / "thk";
  const auto r = run_stage("thickness", json{{"gm", (ph / "truth_gm.nii").string()},
                                             {"wm", (ph / "truth_wm.nii").string()},
                                             {"pial", pial},
                                             {"out", out.string()},
                                             {"params", {{"laplace_max_iter", 1}}}}
                                           .dump());
  CHECK_FALSE(r.converged);
  CHECK(fs::exists(out.string() + "_psi.nii"));
}
