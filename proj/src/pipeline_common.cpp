#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>

#include "laminar/volume_io.hpp"
#include "pipeline_internal.hpp"

namespace laminar::pipeline {

namespace {

std::atomic<std::FILE*> g_log{stderr};
std::mutex g_log_mutex;

template <class T>
void take(const detail::json& j, const char* key, T& slot) {
  try {
    slot = j.get<T>();
  } catch (const detail::json::exception&) {
    fail(ErrorKind::usage, std::string("parameter '") + key + "' has the wrong type");
  }
}

}  // namespace

void Params::merge_json(const std::string& object_text) {
  detail::json j;
  try {
    j = detail::json::parse(object_text);
  } catch (const detail::json::exception& e) {
    fail(ErrorKind::usage, std::string("params: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::usage, "params must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "scale_lo") take(v, k, scale_lo);
    else if (key == "scale_hi") take(v, k, scale_hi);
    else if (key == "em_classes") take(v, k, em_classes);
    else if (key == "em_tol") take(v, k, em_tol);
    else if (key == "em_max_iter") take(v, k, em_max_iter);
    else if (key == "class_map") take(v, k, class_map);
    else if (key == "fissure_sigma") take(v, k, fissure_sigma);
    else if (key == "laplace_tol") take(v, k, laplace_tol);
    else if (key == "laplace_max_iter") take(v, k, laplace_max_iter);
    else if (key == "stream_tol") take(v, k, stream_tol);
    else if (key == "stream_max_iter") take(v, k, stream_max_iter);
    else if (key == "planar_scale") take(v, k, planar_scale);
    else if (key == "planar_alpha") take(v, k, planar_alpha);
    else if (key == "planar_beta") take(v, k, planar_beta);
    else if (key == "planar_c") take(v, k, planar_c);
    else if (key == "tau_p") take(v, k, tau_p);
    else if (key == "erosion_depth") take(v, k, erosion_depth);
    else if (key == "min_component") take(v, k, min_component);
    else if (key == "extrap_levels") take(v, k, extrap_levels);
    else if (key == "sigma_max") take(v, k, sigma_max);
    else if (key == "sigma_min") take(v, k, sigma_min);
    else if (key == "tau_lambda") take(v, k, tau_lambda);
    else if (key == "mass_threshold") take(v, k, mass_threshold);
    else if (key == "fdr_q") take(v, k, fdr_q);
    else if (key == "tiv_mode") take(v, k, tiv_mode);
    else if (key == "stat_measure") take(v, k, stat_measure);
    else fail(ErrorKind::usage, "unknown parameter '" + key + "'");
  }
  if (stat_measure != "TGM" && stat_measure != "TGran" && stat_measure != "TMol") {
    fail(ErrorKind::usage, "stat_measure must be TGM, TGran or TMol");
  }
  if (min_component < 0 || erosion_depth < 0) fail(ErrorKind::usage, "min_component and erosion_depth must be >= 0");
}

std::string Params::to_json() const {
  detail::json j;
  j["scale_lo"] = scale_lo;
  j["scale_hi"] = scale_hi;
  j["em_classes"] = em_classes;
  j["em_tol"] = em_tol;
  j["em_max_iter"] = em_max_iter;
  j["class_map"] = class_map;
  j["fissure_sigma"] = fissure_sigma;
  j["laplace_tol"] = laplace_tol;
  j["laplace_max_iter"] = laplace_max_iter;
  j["stream_tol"] = stream_tol;
  j["stream_max_iter"] = stream_max_iter;
  j["planar_scale"] = planar_scale;
  j["planar_alpha"] = planar_alpha;
  j["planar_beta"] = planar_beta;
  j["planar_c"] = planar_c;
  j["tau_p"] = tau_p;
  j["erosion_depth"] = erosion_depth;
  j["min_component"] = min_component;
  j["extrap_levels"] = extrap_levels;
  j["sigma_max"] = sigma_max;
  j["sigma_min"] = sigma_min;
  j["tau_lambda"] = tau_lambda;
  j["mass_threshold"] = mass_threshold;
  j["fdr_q"] = fdr_q;
  j["tiv_mode"] = tiv_mode;
  j["stat_measure"] = stat_measure;
  return j.dump();
}

void set_log_stream(std::FILE* stream) { g_log.store(stream); }

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::parameter:
      return 2;
    case ErrorKind::convergence:
      return 4;
    default:
      return 3;
  }
}

std::string sha256_file(const std::string& path) {
  const auto bytes = io::read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::io, "sha256 failed for '" + path + "'");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"phantom",  "standardize", "segment",   "fissures", "thickness",
                                              "purkinje", "sublayers",   "stats",     "run-all"};
  return names;
}

StageResult run_stage(const std::string& stage, const std::string& args_json) {
  using namespace detail;
  if (stage == "phantom") return stage_phantom(args_json);
  if (stage == "standardize") return stage_standardize(args_json);
  if (stage == "segment") return stage_segment(args_json);
  if (stage == "fissures") return stage_fissures(args_json);
  if (stage == "thickness") return stage_thickness(args_json);
  if (stage == "purkinje") return stage_purkinje(args_json);
  if (stage == "sublayers") return stage_sublayers(args_json);
  if (stage == "stats") return stage_stats(args_json);
  if (stage == "run-all") return stage_run_all(args_json);
  fail(ErrorKind::usage, "unknown stage '" + stage + "'");
}

namespace detail {

json parse_args(const std::string& text, const std::vector<std::string>& allowed, const char* stage) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::usage, std::string(stage) + ": arguments are not valid JSON: " + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::usage, std::string(stage) + ": arguments must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorKind::usage, std::string(stage) + ": unknown key '" + key + "'");
    }
  }
  return j;
}

std::string need_string(const json& args, const char* key, const char* stage) {
  if (!args.contains(key) || !args.at(key).is_string() || args.at(key).get<std::string>().empty()) {
    fail(ErrorKind::usage, std::string(stage) + ": missing string argument '" + key + "'");
  }
  return args.at(key).get<std::string>();
}

std::vector<std::string> need_strings(const json& args, const char* key, const char* stage) {
  if (!args.contains(key) || !args.at(key).is_array()) {
    fail(ErrorKind::usage, std::string(stage) + ": missing array argument '" + key + "'");
  }
  std::vector<std::string> out;
  for (const auto& v : args.at(key)) {
    if (!v.is_string()) fail(ErrorKind::usage, std::string(stage) + ": '" + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::string optional_string(const json& args, const char* key) {
  if (!args.contains(key) || args.at(key).is_null()) return {};
  if (!args.at(key).is_string()) fail(ErrorKind::usage, std::string("'") + key + "' must be a string");
  return args.at(key).get<std::string>();
}

Params params_from(const json& args) {
  Params p;
  if (args.contains("params")) p.merge_json(args.at("params").dump());
  return p;
}

void require_inputs(const std::vector<std::string>& paths, const char* stage) {
  for (const auto& p : paths) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) {
      fail(ErrorKind::io, std::string(stage) + ": input file not found: " + p);
    }
  }
}

void prepare_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory '" + parent.string() + "': " + ec.message());
}

void add_artifact(json& artifacts, const std::string& name, const std::string& path, const char* stage,
                  const json& params) {
  artifacts.push_back(
      {{"artifact", name}, {"path", path}, {"sha256", sha256_file(path)}, {"stage", stage}, {"params", params}});
}

void write_json(const std::string& path, const json& j) {
  prepare_output(path);
  io::write_file(path, j.dump(2) + "\n");
}

json begin_stage(const char* stage, const json& inputs, const Params& params) {
  log_event({{"event", "stage_start"}, {"stage", stage}, {"inputs", inputs}, {"params", json::parse(params.to_json())}});
  return {{"stage", stage}, {"inputs", inputs}, {"params", json::parse(params.to_json())}, {"artifacts", json::array()}};
}

StageResult finish_stage(json& result, const std::string& provenance_path, bool converged) {
  result["converged"] = converged;
  write_json(provenance_path, result);
  log_event({{"event", "stage_done"}, {"stage", result["stage"]}, {"converged", converged}});
  return {result.dump(), converged};
}

void log_event(const json& j) {
  std::FILE* f = g_log.load();
  if (!f) return;
  const std::string line = j.dump() + "\n";
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::fputs(line.c_str(), f);
  std::fflush(f);
}

}  // namespace detail
}  // namespace laminar::pipeline
