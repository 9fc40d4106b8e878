// SPDX-License-Identifier: Apache-2.0
#include "cap/runcfg.hpp"

#include <fstream>

namespace cap {

namespace {

using nlohmann::json;

SyntheticTaskSpec parse_task(const json& j) {
  SyntheticTaskSpec t;
  t.task_id = j.at("task_id");
  t.kind = task_kind_from_name(j.at("kind"));
  t.num_classes = j.value("num_classes", t.kind == TaskKind::kSpoof ? 2 : 4);
  if (j.contains("clips_per_class")) {
    const auto& c = j.at("clips_per_class");
    for (int i = 0; i < 3; ++i) t.clips_per_class[i] = c.at(i);
  }
  if (j.contains("class_proportions"))
    t.class_proportions = j.at("class_proportions").get<std::vector<double>>();
  t.min_duration_s = j.value("min_duration_s", 1.0);
  t.max_duration_s = j.value("max_duration_s", 2.0);
  t.seed = j.value("seed", 0ull);
  return t;
}

json task_json(const SyntheticTaskSpec& t) {
  json j;
  j["task_id"] = t.task_id;
  j["kind"] = task_kind_name(t.kind);
  j["num_classes"] = t.num_classes;
  j["clips_per_class"] = t.clips_per_class;
  if (!t.class_proportions.empty()) j["class_proportions"] = t.class_proportions;
  j["min_duration_s"] = t.min_duration_s;
  j["max_duration_s"] = t.max_duration_s;
  j["seed"] = t.seed;
  return j;
}

ModelSpec parse_model(const json& j) {
  ModelSpec m;
  m.name = j.at("name");
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    m.model.encoder.num_layers = e.value("num_layers", 8);
    m.model.encoder.num_heads = e.value("num_heads", 4);
    m.model.encoder.model_dim = e.value("model_dim", 64);
    m.model.encoder.ffn_expansion = e.value("ffn_expansion", 4);
    m.model.encoder.conv_kernel = e.value("conv_kernel", 8);
    m.model.encoder.relative_attention = e.value("relative_attention", false);
    m.model.encoder.rel_max_offset = e.value("rel_max_offset", 64);
  }
  if (j.contains("featenc")) {
    const auto& f = j.at("featenc");
    m.model.featenc.mel_bins = f.value("mel_bins", 80);
    if (f.contains("channels")) {
      const auto& c = f.at("channels");
      for (int i = 0; i < 3; ++i) m.model.featenc.channels[i] = c.at(i);
    }
  }
  m.model.featenc.channels[2] = m.model.encoder.model_dim;
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    m.pretrain.steps = p.value("steps", 2000);
    m.pretrain.batch_size = p.value("batch_size", 8);
    m.pretrain.learning_rate = p.value("learning_rate", 1e-3);
    m.pretrain.warmup_steps = p.value("warmup_steps", 100);
    m.pretrain.grad_clip = p.value("grad_clip", 1.0);
    m.pretrain.mask_start_prob = p.value("mask_start_prob", 0.065);
    m.pretrain.mask_span = p.value("mask_span", 10);
    m.pretrain.kappa = p.value("kappa", 0.1);
    m.pretrain.num_distractors = p.value("num_distractors", 10);
    m.pretrain.checkpoint_every = p.value("checkpoint_every", 500);
  }
  m.model.validate();
  return m;
}

json model_json(const ModelSpec& m) {
  json j;
  j["name"] = m.name;
  j["encoder"] = {{"num_layers", m.model.encoder.num_layers},
                  {"num_heads", m.model.encoder.num_heads},
                  {"model_dim", m.model.encoder.model_dim},
                  {"ffn_expansion", m.model.encoder.ffn_expansion},
                  {"conv_kernel", m.model.encoder.conv_kernel},
                  {"relative_attention", m.model.encoder.relative_attention},
                  {"rel_max_offset", m.model.encoder.rel_max_offset}};
  j["featenc"] = {{"mel_bins", m.model.featenc.mel_bins},
                  {"channels", m.model.featenc.channels}};
  j["pretrain"] = {{"steps", m.pretrain.steps},
                   {"batch_size", m.pretrain.batch_size},
                   {"learning_rate", m.pretrain.learning_rate},
                   {"warmup_steps", m.pretrain.warmup_steps},
                   {"grad_clip", m.pretrain.grad_clip},
                   {"mask_start_prob", m.pretrain.mask_start_prob},
                   {"mask_span", m.pretrain.mask_span},
                   {"kappa", m.pretrain.kappa},
                   {"num_distractors", m.pretrain.num_distractors},
                   {"checkpoint_every", m.pretrain.checkpoint_every}};
  return j;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.version = j.at("version");
  if (cfg.version != 1) throw Error("unsupported config version");
  cfg.seed = j.value("seed", 7ull);
  cfg.out_dir = j.value("out_dir", "out");
  for (const auto& t : j.value("tasks", json::array()))
    cfg.tasks.push_back(parse_task(t));
  cfg.ingest_dirs = j.value("ingest_dirs", std::vector<std::string>{});
  for (const auto& m : j.value("models", json::array()))
    cfg.models.push_back(parse_model(m));
  cfg.window_policies =
      j.value("window_policies", std::vector<std::string>{"full"});
  for (const auto& p : cfg.window_policies) WindowPolicy::from_name(p);
  cfg.layers = j.value("layers", std::vector<int>{});
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    cfg.probe.l2 = p.value("l2", 1e-3);
    cfg.probe.lda_shrinkage = p.value("lda_shrinkage", 1e-2);
    cfg.probe.max_iterations = p.value("max_iterations", 2000);
    cfg.probe.tolerance = p.value("tolerance", 1e-7);
  }
  cfg.cka_sample = j.value("cka_sample", 256);
  cfg.attn_sample = j.value("attn_sample", 16);
  if (cfg.models.empty()) throw Error("config needs at least one model");
  if (cfg.tasks.empty() && cfg.ingest_dirs.empty())
    throw Error("config needs at least one task");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return parse_run_config(j);
}

nlohmann::json run_config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["version"] = cfg.version;
  j["seed"] = cfg.seed;
  j["tasks"] = nlohmann::json::array();
  for (const auto& t : cfg.tasks) j["tasks"].push_back(task_json(t));
  j["ingest_dirs"] = cfg.ingest_dirs;
  j["models"] = nlohmann::json::array();
  for (const auto& m : cfg.models) j["models"].push_back(model_json(m));
  j["window_policies"] = cfg.window_policies;
  j["layers"] = cfg.layers;
  j["probe"] = {{"l2", cfg.probe.l2},
                {"lda_shrinkage", cfg.probe.lda_shrinkage},
                {"max_iterations", cfg.probe.max_iterations},
                {"tolerance", cfg.probe.tolerance}};
  j["cka_sample"] = cfg.cka_sample;
  j["attn_sample"] = cfg.attn_sample;
  return j;
}

std::uint64_t run_config_fingerprint(const RunConfig& cfg) {
  // nlohmann::json objects serialize with sorted keys, so dump() is a
  // canonical form.
  const std::string s = run_config_json(cfg).dump();
  return fnv1a64(s);
}

}  // namespace cap
