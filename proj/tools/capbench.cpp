// SPDX-License-Identifier: Apache-2.0
//
// Pipeline driver: synthesize corpora, pretrain encoders, extract clip
// embeddings, probe them, and run layer analyses from one JSON config.

#include <iostream>

#include "CLI11.hpp"

#include "cap/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  bool single_thread = false;
  bool skip_bad = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Run configuration JSON")
      ->required();
  cmd->add_option("--seed", flags.seed, "Override the config seed");
  cmd->add_option("--out", flags.out_dir, "Override the output directory");
  cmd->add_option("--threads", flags.threads, "Worker threads for extraction");
  cmd->add_flag("--single-thread", flags.single_thread,
                "Force fully deterministic single-threaded execution");
  cmd->add_flag("--skip-bad", flags.skip_bad,
                "Skip unreadable input files instead of aborting");
}

int run_stages(const CommonFlags& flags, const std::vector<std::string>& stages) {
  cap::RunConfig cfg = cap::load_run_config(flags.config_path);
  if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  cfg.single_thread = flags.single_thread;
  cfg.num_threads = flags.threads;
  cfg.skip_bad = flags.skip_bad;

  const cap::RunReport report = cap::run_pipeline(cfg, stages);
  for (const auto& s : report.stages)
    std::cerr << "[" << s.name << "] "
              << (s.skipped ? "skipped" : (s.ok ? "ok" : "FAILED"))
              << " (" << s.wall_s << " s)"
              << (s.detail.empty() ? "" : ": " + s.detail) << "\n";
  if (!report.failed_stage.empty()) {
    std::cerr << "failed stage: " << report.failed_stage << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paralinguistic representation workbench"};
  app.require_subcommand(1);

  std::map<std::string, CommonFlags> flags;
  for (const std::string name :
       {"synth", "pretrain", "extract", "probe", "analyze", "report", "run"}) {
    CLI::App* cmd = app.add_subcommand(
        name, name == "run" ? "Run the full pipeline" : "Run the " + name +
                                                            " stage");
    add_common(cmd, flags[name]);
  }

  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands()[0]->get_name();
  try {
    if (sub == "run") return run_stages(flags[sub], cap::all_stages());
    return run_stages(flags[sub], {sub});
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
