// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "cap/model.hpp"
#include "cap/pretrain.hpp"
#include "cap/probe.hpp"
#include "cap/synth.hpp"

namespace cap {

struct ModelSpec {
  std::string name;
  ModelConfig model;
  PretrainConfig pretrain;
};

struct RunConfig {
  int version = 1;
  std::uint64_t seed = 7;
  std::string out_dir = "out";
  std::vector<SyntheticTaskSpec> tasks;
  std::vector<std::string> ingest_dirs;
  std::vector<ModelSpec> models;
  std::vector<std::string> window_policies = {"full"};
  std::vector<int> layers;  // empty: all layers 0..L
  ProbeSpec probe;
  int cka_sample = 256;
  int attn_sample = 16;
  // Execution flags (not part of the fingerprint).
  bool single_thread = false;
  int num_threads = 1;
  bool skip_bad = false;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
// Canonical form used for fingerprinting; excludes execution flags.
nlohmann::json run_config_json(const RunConfig& cfg);
std::uint64_t run_config_fingerprint(const RunConfig& cfg);

}  // namespace cap
