#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "laminar/pipeline.hpp"

namespace laminar::pipeline::detail {

using nlohmann::json;

/// Parses a stage argument object and rejects keys outside `allowed`.
json parse_args(const std::string& text, const std::vector<std::string>& allowed, const char* stage);

std::string need_string(const json& args, const char* key, const char* stage);
std::vector<std::string> need_strings(const json& args, const char* key, const char* stage);
std::string optional_string(const json& args, const char* key);

/// Stage parameters: defaults overridden by args["params"] when present.
Params params_from(const json& args);

/// Throws an io error naming the first missing file; run before any write.
void require_inputs(const std::vector<std::string>& paths, const char* stage);

/// Creates the parent directory of an output path.
void prepare_output(const std::string& path);

/// Records one written artifact (with its content hash) into `artifacts`.
void add_artifact(json& artifacts, const std::string& name, const std::string& path, const char* stage,
                  const json& params);

/// Writes `<path>` as pretty JSON with a trailing newline.
void write_json(const std::string& path, const json& j);

void log_event(const json& j);

/// Logs the stage start and returns the result skeleton with an empty artifact list.
json begin_stage(const char* stage, const json& inputs, const Params& params);

/// Stamps the convergence flag, writes the provenance sidecar and logs completion.
StageResult finish_stage(json& result, const std::string& provenance_path, bool converged);

StageResult stage_phantom(const std::string& args);
StageResult stage_standardize(const std::string& args);
StageResult stage_segment(const std::string& args);
StageResult stage_fissures(const std::string& args);
StageResult stage_thickness(const std::string& args);
StageResult stage_purkinje(const std::string& args);
StageResult stage_sublayers(const std::string& args);
StageResult stage_stats(const std::string& args);
StageResult stage_run_all(const std::string& args);

}  // namespace laminar::pipeline::detail
