#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srotlab/displacement.hpp"
#include "srotlab/geodesics.hpp"
#include "srotlab/metric.hpp"

namespace srotlab::lab {

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 1 check failure, 2 config/io, 3 solver
  std::vector<std::string> artifacts;
  std::vector<std::string> failed_checks;
  std::string manifest_path;
};

struct RunOverrides {
  int threads = -1;          // <0: scenario value
  std::int64_t seed = -1;    // <0: scenario value
  std::string cache_dir;     // empty: scenario/env value
};

/// Parses and executes a scenario JSON file: generates measures, runs the
/// experiment list in order, writes CSV/JSON artifacts plus a manifest
/// (inputs hash, versions, wall time) into out_dir. Configuration problems
/// throw ConfigError/IoError; solver failures throw SolverError subclasses;
/// failed acceptance-style "expect" checks set exit_code 1.
RunOutcome run_scenario_file(const std::string& scenario_path,
                             const std::string& out_dir,
                             const RunOverrides& overrides = {});

// --- report serialization (JSON strings; used by the CLI one-shots too) ---

std::string distance_report_json(const std::string& frame_name, const Vec& x,
                                 const Vec& y, const DistanceResult& result);

std::string singular_report_json(const std::string& frame_name, int rank,
                                 bool is_singular, bool goh,
                                 double abnormal_residual, double goh_residual,
                                 bool has_certificate);

std::string regularity_report_json(const std::string& frame_name,
                                   const std::string& kind, double estimate,
                                   int samples, double scale,
                                   const std::string& region_desc);

/// Trajectory CSV with columns t, x1..xn, p1..pn, u1..um, H.
void write_extremal_csv(const std::string& path, const NormalExtremal& extremal);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace srotlab::lab
