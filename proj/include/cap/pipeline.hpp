// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cap/runcfg.hpp"

namespace cap {

struct StageStatus {
  std::string name;
  bool ok = false;
  bool skipped = false;
  double wall_s = 0.0;
  std::string detail;
};

struct RunReport {
  std::uint64_t fingerprint = 0;
  std::vector<StageStatus> stages;
  std::string failed_stage;  // empty on success
  std::string out_dir;
};

inline const std::vector<std::string>& all_stages() {
  static const std::vector<std::string> s = {"synth",   "pretrain", "extract",
                                             "probe",   "analyze",  "report"};
  return s;
}

// Executes the requested stages in dependency order. Completed stages are
// skipped when their marker carries the current config fingerprint and
// their outputs exist. On stage failure the report names the stage and
// carries the statuses accumulated so far.
RunReport run_pipeline(const RunConfig& cfg,
                       const std::vector<std::string>& stages = all_stages());

}  // namespace cap
