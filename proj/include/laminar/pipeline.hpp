#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "laminar/error.hpp"

namespace laminar::pipeline {

/// Every tunable numeric default, overridable by a key of the same name.
struct Params {
  double scale_lo = 0.0;
  double scale_hi = 1000.0;
  int em_classes = 4;
  double em_tol = 1e-6;
  int em_max_iter = 200;
  std::vector<std::string> class_map{"other", "wm", "gm", "gm"};
  double fissure_sigma = 1.5;
  double laplace_tol = 1e-6;
  int laplace_max_iter = 5000;
  double stream_tol = 1e-6;
  int stream_max_iter = 500;
  double planar_scale = 0.04;
  double planar_alpha = 0.5;
  double planar_beta = 0.5;
  double planar_c = 0.0;
  double tau_p = 0.2;
  int erosion_depth = 2;
  int min_component = 5;
  int extrap_levels = 10;
  double sigma_max = 15.0;
  double sigma_min = 1.0;
  double tau_lambda = 0.05;
  double mass_threshold = 1e-6;
  double fdr_q = 0.1;
  std::string tiv_mode = "ratio";
  std::string stat_measure = "TGM";

  /// Applies the keys of a JSON object; unknown keys are a usage error.
  void merge_json(const std::string& object_text);
  std::string to_json() const;
};

/// Result of one stage invocation. `json` lists artifacts and diagnostics;
/// `converged` is false when an iterative solver stopped at its limit, in
/// which case the artifacts were still written.
struct StageResult {
  std::string json;
  bool converged = true;
};

/// Runs one named stage ("phantom", "standardize", "segment", "fissures",
/// "thickness", "purkinje", "sublayers", "stats", "run-all") on a JSON
/// argument object. Throws laminar::Error on failure.
StageResult run_stage(const std::string& stage, const std::string& args_json);

/// Stage names in execution order of run-all, preceded by "phantom".
const std::vector<std::string>& stage_names();

/// Structured log destination (one JSON object per line); nullptr silences it.
void set_log_stream(std::FILE* stream);

/// Exit code contract of the command-line tool.
int exit_code_for(ErrorKind kind);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace laminar::pipeline
