// Command-line front end. Every subcommand builds a JSON argument object and
// hands it to lam_stage_run; errors are reported as one JSON record per line
// on stderr.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "laminar/laminar.h"

namespace {

using nlohmann::json;

int report_error(const std::string& kind, int code, const std::string& message, const std::string& stage = {}) {
  json rec{{"status", "error"}, {"kind", kind}, {"exit", code}, {"message", message}};
  if (!stage.empty()) rec["stage"] = stage;
  std::cerr << rec.dump() << std::endl;
  return code;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return json::parse(ss.str());
}

// "key=value" overrides; the value is parsed as JSON when possible.
json parse_overrides(const std::vector<std::string>& sets) {
  json out = json::object();
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    try {
      out[key] = json::parse(value);
    } catch (const json::exception&) {
      out[key] = value;
    }
  }
  return out;
}

int run(const std::string& stage, const json& args) {
  char* result = nullptr;
  const lam_status st = lam_stage_run(stage.c_str(), args.dump().c_str(), &result);
  if (result) {
    std::cout << result << std::endl;
    lam_string_free(result);
  }
  if (st == LAM_OK) return 0;
  return report_error(lam_status_name(st), lam_status_exit_code(st), lam_last_error(), stage);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laminar and sublayer thickness measurement on voxel grids"};
  app.require_subcommand(1);
  app.set_version_flag("--version", lam_version());

  int workers = -1;
  bool quiet = false;
  std::vector<std::string> sets;
  std::string params_file;
  app.add_option("--workers", workers, "Worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", quiet, "Suppress the JSON-lines log on stderr");
  // One value per occurrence, so "--set k=v stage ..." does not swallow the subcommand.
  app.add_option("--set", sets, "Parameter override key=value (repeatable)")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--params", params_file, "JSON file with parameter overrides");

  std::map<std::string, json> args;
  std::map<std::string, std::string> s;  // string options, keyed "stage.name"
  std::map<std::string, std::vector<std::string>> v;

  auto* ph = app.add_subcommand("phantom", "Generate a synthetic phantom");
  ph->add_option("--spec", s["phantom.spec"], "Phantom spec JSON file")->required();
  ph->add_option("--out", s["phantom.out"], "Output directory")->required();

  auto* sd = app.add_subcommand("standardize", "Landmark intensity standardization");
  sd->add_option("--images", v["standardize.images"])->required();
  sd->add_option("--masks", v["standardize.masks"])->required();
  sd->add_option("--outputs", v["standardize.outputs"])->required();
  sd->add_option("--model", s["standardize.model"], "Apply an existing landmark model");
  sd->add_option("--model-out", s["standardize.model_out"], "Train and write a landmark model");

  auto* sg = app.add_subcommand("segment", "EM tissue segmentation");
  sg->add_option("--image", s["segment.image"])->required();
  sg->add_option("--mask", s["segment.mask"])->required();
  sg->add_option("--priors", v["segment.priors"], "One prior volume per class; flat priors when omitted");
  sg->add_option("--out", s["segment.out"], "Output prefix")->required();

  auto* fs = app.add_subcommand("fissures", "Fissure extraction and pial boundary");
  fs->add_option("--image", s["fissures.image"])->required();
  fs->add_option("--wm", s["fissures.wm"])->required();
  fs->add_option("--gm", s["fissures.gm"])->required();
  fs->add_option("--out", s["fissures.out"], "Output prefix")->required();

  double tol = -1.0;
  int max_iter = -1;
  auto* th = app.add_subcommand("thickness", "Laplace and streamline thickness");
  th->add_option("--gm", s["thickness.gm"])->required();
  th->add_option("--wm", s["thickness.wm"])->required();
  th->add_option("--pial", s["thickness.pial"])->required();
  th->add_option("--out", s["thickness.out"], "Output prefix")->required();
  th->add_option("--tol", tol, "Laplace tolerance");
  th->add_option("--max-iter", max_iter, "Laplace iteration limit");

  auto* pk = app.add_subcommand("purkinje", "Mid-layer detection and extrapolation");
  for (const char* k : {"image", "gm", "wm", "pial", "thickness", "out"}) {
    pk->add_option(std::string("--") + k, s[std::string("purkinje.") + k])->required();
  }

  auto* sl = app.add_subcommand("sublayers", "Granular and molecular thickness at the mid-layer");
  for (const char* k : {"mpf", "gm", "wm", "pial", "thickness", "out"}) {
    sl->add_option(std::string("--") + k, s[std::string("sublayers.") + k])->required();
  }

  auto* st = app.add_subcommand("stats", "Regional statistics and FDR");
  st->add_option("--config", s["stats.config"], "JSON with subjects and out")->required();

  auto* ra = app.add_subcommand("run-all", "Run every stage from a run configuration");
  ra->add_option("--config", s["run-all.config"], "RunConfig JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", 2, e.what());
  }

  if (quiet) lam_set_logging(0);
  if (workers >= 0 && lam_set_workers(workers) != LAM_OK) return report_error("usage", 2, lam_last_error());

  json params;
  try {
    params = params_file.empty() ? json::object() : read_json_file(params_file);
    const json overrides = parse_overrides(sets);
    for (const auto& [k, val] : overrides.items()) params[k] = val;
  } catch (const std::exception& e) {
    return report_error("usage", 2, e.what());
  }
  const bool has_params = !params.empty();

  if (app.get_subcommands().empty()) return report_error("usage", 2, "a subcommand is required");
  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  json a = json::object();
  auto str = [&](const char* key) { return s[name + "." + key]; };
  auto copy = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys) a[k] = str(k);
  };
  try {
    if (name == "phantom") {
      copy({"spec", "out"});
    } else if (name == "standardize") {
      a["images"] = v["standardize.images"];
      a["masks"] = v["standardize.masks"];
      a["outputs"] = v["standardize.outputs"];
      if (!str("model").empty()) a["model"] = str("model");
      if (!str("model_out").empty()) a["model_out"] = str("model_out");
    } else if (name == "segment") {
      copy({"image", "mask", "out"});
      if (!v["segment.priors"].empty()) a["priors"] = v["segment.priors"];
    } else if (name == "fissures") {
      copy({"image", "wm", "gm", "out"});
    } else if (name == "thickness") {
      copy({"gm", "wm", "pial", "out"});
      if (tol > 0.0) params["laplace_tol"] = tol;
      if (max_iter >= 0) params["laplace_max_iter"] = max_iter;
    } else if (name == "purkinje") {
      copy({"image", "gm", "wm", "pial", "thickness", "out"});
    } else if (name == "sublayers") {
      copy({"mpf", "gm", "wm", "pial", "thickness", "out"});
    } else if (name == "stats" || name == "run-all") {
      a = read_json_file(str("config"));
      if (!a.is_object()) return report_error("usage", 2, "config must be a JSON object");
      if (a.contains("params")) {
        for (const auto& [k, val] : params.items()) a["params"][k] = val;
      } else if (!params.empty()) {
        a["params"] = params;
      }
    }
  } catch (const std::exception& e) {
    return report_error("usage", 2, e.what(), name);
  }
  if (name != "stats" && name != "run-all" && name != "sublayers" && name != "phantom" && !params.empty()) {
    a["params"] = params;
  } else if ((name == "sublayers" || name == "phantom") && has_params) {
    return report_error("usage", 2, name + " takes no parameters", name);
  }
  return run(name, a);
}
