// SPDX-License-Identifier: Apache-2.0
#include "cap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "cap/analysis.hpp"
#include "cap/checkpoint.hpp"
#include "cap/trainer.hpp"

namespace fs = std::filesystem;

namespace cap {

namespace {

std::string fp_hex(std::uint64_t fp) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

struct Ctx {
  RunConfig cfg;
  std::uint64_t fingerprint = 0;
  std::string config_json;
  fs::path out;
  std::vector<AudioClip> corpus;       // all tasks, all splits
  std::vector<TaskDef> task_defs;
  int threads() const {
    return cfg.single_thread ? 1 : std::max(1, cfg.num_threads);
  }

  fs::path model_dir(const ModelSpec& m) const { return out / m.name; }
  fs::path ckpt_path(const ModelSpec& m) const {
    return model_dir(m) / "ckpt.bin";
  }
  fs::path emb_path(const ModelSpec& m) const {
    return model_dir(m) / "embeddings.bin";
  }
  fs::path emb_manifest(const ModelSpec& m) const {
    return model_dir(m) / "embeddings.manifest.jsonl";
  }

  std::vector<int> layer_set(const ModelSpec& m) const {
    if (!cfg.layers.empty()) return cfg.layers;
    std::vector<int> layers;
    for (int l = 0; l <= m.model.encoder.num_layers; ++l) layers.push_back(l);
    return layers;
  }
  std::vector<WindowPolicy> policies() const {
    std::vector<WindowPolicy> out;
    for (const auto& p : cfg.window_policies)
      out.push_back(WindowPolicy::from_name(p));
    return out;
  }
  std::uint64_t model_seed(const ModelSpec& m) const {
    return cfg.seed ^ fnv1a64(m.name);
  }
};

void build_corpus(Ctx& ctx) {
  if (!ctx.corpus.empty()) return;
  for (const auto& spec : ctx.cfg.tasks) {
    SyntheticTaskSpec s = spec;
    s.seed ^= ctx.cfg.seed;
    auto clips = synthesize_corpus(s);
    ctx.corpus.insert(ctx.corpus.end(), clips.begin(), clips.end());
    ctx.task_defs.push_back(TaskDef{spec.task_id, metric_for_kind(spec.kind),
                                    spec.kind == TaskKind::kSpoof ? "spoof"
                                                                  : ""});
  }
  for (const auto& dir : ctx.cfg.ingest_dirs) {
    IngestOptions opts;
    opts.skip_bad = ctx.cfg.skip_bad;
    opts.task_id = fs::path(dir).filename().string();
    auto clips = ingest_wav_dir(dir, opts);
    ctx.corpus.insert(ctx.corpus.end(), clips.begin(), clips.end());
    ctx.task_defs.push_back(TaskDef{opts.task_id, MetricKind::kAccuracy, ""});
  }
}

std::vector<AudioClip> train_split(const std::vector<AudioClip>& corpus) {
  std::vector<AudioClip> out;
  for (const auto& c : corpus)
    if (c.split == Split::kTrain) out.push_back(c);
  return out;
}

// Stage markers: skip a stage when its marker holds the current fingerprint
// and the listed outputs still exist.
fs::path marker_path(const Ctx& ctx, const std::string& stage) {
  return ctx.out / (".done_" + stage);
}

bool stage_done(const Ctx& ctx, const std::string& stage,
                const std::vector<fs::path>& outputs) {
  std::ifstream in(marker_path(ctx, stage));
  std::string content;
  if (!(in >> content) || content != fp_hex(ctx.fingerprint)) return false;
  for (const auto& p : outputs)
    if (!fs::exists(p)) return false;
  return true;
}

void mark_stage(const Ctx& ctx, const std::string& stage) {
  std::ofstream out(marker_path(ctx, stage));
  out << fp_hex(ctx.fingerprint) << "\n";
}

// ---- synth ---------------------------------------------------------------

void stage_synth(Ctx& ctx) {
  build_corpus(ctx);
  const fs::path corpus_dir = ctx.out / "corpus";
  for (const auto& spec : ctx.cfg.tasks) {
    std::vector<AudioClip> task_clips;
    for (const auto& c : ctx.corpus)
      if (c.task_id == spec.task_id) task_clips.push_back(c);
    for (const auto& c : task_clips) {
      const std::string stem = c.clip_id.substr(c.clip_id.rfind('/') + 1);
      const fs::path dir =
          corpus_dir / c.task_id / split_name(c.split) / c.label;
      fs::create_directories(dir);
      write_wav((dir / (stem + ".wav")).string(), c.samples, c.sample_rate);
    }
    write_manifest((corpus_dir / (spec.task_id + ".manifest.jsonl")).string(),
                   task_clips);
  }
}

// ---- pretrain ------------------------------------------------------------

void stage_pretrain(Ctx& ctx) {
  build_corpus(ctx);
  const auto train_clips = train_split(ctx.corpus);
  for (const auto& m : ctx.cfg.models) {
    fs::create_directories(ctx.model_dir(m));
    TrainOptions opts;
    opts.checkpoint_path = ctx.ckpt_path(m).string();
    opts.metrics_csv = (ctx.model_dir(m) / "metrics.csv").string();
    opts.fingerprint = ctx.fingerprint;
    opts.config_json = ctx.config_json;
    const TrainResult r =
        train(train_clips, m.model, m.pretrain, ctx.model_seed(m), opts);
    if (r.diverged)
      throw Error("pretrain diverged for model " + m.name +
                  " (last good checkpoint retained)");
  }
}

// ---- extract ---------------------------------------------------------------

void stage_extract(Ctx& ctx) {
  build_corpus(ctx);
  for (const auto& m : ctx.cfg.models) {
    auto ckpt = load_checkpoint<float>(ctx.ckpt_path(m).string(),
                                       ctx.fingerprint);
    EmbeddingTable table;
    if (fs::exists(ctx.emb_path(m)) && fs::exists(ctx.emb_manifest(m)))
      table = EmbeddingTable::load(ctx.emb_path(m).string(),
                                   ctx.emb_manifest(m).string());
    extract_all(ctx.corpus, ckpt.store, m.model, ctx.layer_set(m),
                ctx.policies(), table, ctx.threads());
    table.save(ctx.emb_path(m).string(), ctx.emb_manifest(m).string());
  }
}

// ---- probe -----------------------------------------------------------------

void stage_probe(Ctx& ctx) {
  build_corpus(ctx);
  for (const auto& m : ctx.cfg.models) {
    const EmbeddingTable table = EmbeddingTable::load(
        ctx.emb_path(m).string(), ctx.emb_manifest(m).string());
    const ProbeReport report =
        run_benchmark(table, ctx.task_defs, ctx.cfg.probe);
    report.save_csv((ctx.model_dir(m) / "probe_report.csv").string());

    std::ofstream agg(ctx.model_dir(m) / "aggregate.csv");
    agg << "# fingerprint=" << fp_hex(ctx.fingerprint) << "\n";
    agg << "layer,policy,dev_aggregate,test_aggregate\n";
    for (const auto& [slot, dev] : report.dev_aggregate)
      agg << slot.first << "," << slot.second << "," << dev << ","
          << report.test_aggregate.at(slot) << "\n";

    // Chosen-classifier test predictions at the model's best dev layer
    // under full context, one JSONL per task (disagreement analysis input).
    const int best = report.best_layer("full");
    const fs::path pred_dir = ctx.model_dir(m) / "predictions";
    fs::create_directories(pred_dir);
    for (const auto& task : ctx.task_defs) {
      const auto& preds =
          report.predictions.at(ProbeReport::key(task.task_id, best, "full"));
      std::ofstream out(pred_dir / (task.task_id + ".jsonl"));
      for (const auto& p : preds) {
        nlohmann::json j;
        j["clip_id"] = p.clip_id;
        j["true_label"] = p.true_label;
        j["pred_label"] = p.pred_label;
        j["score"] = p.positive_score;
        j["fingerprint"] = fp_hex(ctx.fingerprint);
        out << j.dump() << "\n";
      }
    }
  }
}

// ---- analyze ---------------------------------------------------------------

struct AggregateRows {
  // (layer, policy) -> (dev, test)
  std::map<std::pair<int, std::string>, std::pair<double, double>> rows;
  int best_layer(const std::string& policy) const {
    int best = -1;
    double score = -1;
    for (const auto& [slot, v] : rows)
      if (slot.second == policy && v.first > score) {
        score = v.first;
        best = slot.first;
      }
    if (best < 0) throw Error("no aggregate rows for policy " + policy);
    return best;
  }
};

AggregateRows load_aggregates(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open aggregates: " + path.string());
  AggregateRows out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("layer,", 0) == 0)
      continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1),
               c3 = line.find(',', c2 + 1);
    out.rows[{std::stoi(line.substr(0, c1)),
              line.substr(c1 + 1, c2 - c1 - 1)}] = {
        std::stod(line.substr(c2 + 1, c3 - c2 - 1)),
        std::stod(line.substr(c3 + 1))};
  }
  return out;
}

std::vector<Matd> layer_embedding_sample(const EmbeddingTable& table,
                                         const std::vector<int>& layers,
                                         int sample_size) {
  // Shared clip sample: sorted clip ids, truncated to sample_size.
  std::set<std::string> ids;
  for (const auto& r : table.rows)
    if (r.window_policy == "full") ids.insert(r.clip_id);
  std::vector<std::string> sample(ids.begin(), ids.end());
  if (static_cast<int>(sample.size()) > sample_size)
    sample.resize(sample_size);
  std::map<std::string, int> order;
  for (std::size_t i = 0; i < sample.size(); ++i) order[sample[i]] = int(i);

  std::vector<Matd> acts;
  for (int layer : layers) {
    Matd x = Matd::Zero(static_cast<Eigen::Index>(sample.size()), table.dim);
    std::size_t filled = 0;
    for (const auto& r : table.rows)
      if (r.layer_index == layer && r.window_policy == "full" &&
          order.count(r.clip_id)) {
        x.row(order[r.clip_id]) = r.vec.transpose().cast<double>();
        ++filled;
      }
    if (filled != sample.size())
      throw Error("embedding table incomplete for cka sample");
    acts.push_back(std::move(x));
  }
  return acts;
}

void stage_analyze(Ctx& ctx) {
  build_corpus(ctx);
  const std::string meta = "fingerprint=" + fp_hex(ctx.fingerprint);

  std::map<std::string, std::vector<Matd>> per_model_acts;
  for (const auto& m : ctx.cfg.models) {
    const EmbeddingTable table = EmbeddingTable::load(
        ctx.emb_path(m).string(), ctx.emb_manifest(m).string());
    auto acts =
        layer_embedding_sample(table, ctx.layer_set(m), ctx.cfg.cka_sample);
    CkaMatrix within = cka_grid(acts, acts, m.name, m.name);
    within.save_csv((ctx.model_dir(m) / "cka_within.csv").string());
    per_model_acts[m.name] = std::move(acts);
  }
  for (std::size_t i = 0; i < ctx.cfg.models.size(); ++i)
    for (std::size_t j = i + 1; j < ctx.cfg.models.size(); ++j) {
      const auto& a = ctx.cfg.models[i];
      const auto& b = ctx.cfg.models[j];
      CkaMatrix cross = cka_grid(per_model_acts[a.name],
                                 per_model_acts[b.name], a.name, b.name);
      cross.save_csv(
          (ctx.out / ("cka_" + a.name + "_vs_" + b.name + ".csv")).string());
    }

  // Mean attention distance over a deterministic clip sample.
  std::vector<const AudioClip*> sample;
  for (const auto& c : ctx.corpus) sample.push_back(&c);
  std::sort(sample.begin(), sample.end(),
            [](const AudioClip* a, const AudioClip* b) {
              return a->clip_id < b->clip_id;
            });
  if (static_cast<int>(sample.size()) > ctx.cfg.attn_sample)
    sample.resize(ctx.cfg.attn_sample);
  const MelConfig mel_cfg{};
  for (const auto& m : ctx.cfg.models) {
    auto ckpt = load_checkpoint<float>(ctx.ckpt_path(m).string(),
                                       ctx.fingerprint);
    const int L = m.model.encoder.num_layers;
    const int H = m.model.encoder.num_heads;
    Matd sums = Matd::Zero(L, H);
    for (const auto* clip : sample) {
      const Matf mel = log_mel(*clip, MelConfig{.mel_bins =
                                                    m.model.featenc.mel_bins})
                           .frames;
      const auto acts = run_encoder(ckpt.store, m.model, mel, true);
      for (int l = 0; l < L; ++l) {
        std::vector<Matd> heads;
        for (const auto& h : acts.attention[l]) heads.push_back(h.cast<double>());
        sums.row(l) += mean_attention_distance(heads, 0.040).transpose();
      }
    }
    AttnDistanceProfile profile;
    profile.per_head = sums / static_cast<double>(sample.size());
    profile.per_layer_min = profile.per_head.rowwise().minCoeff();
    profile.save_csv((ctx.model_dir(m) / "attn_distance.csv").string(),
                     m.name);
  }

  // Normalized-position performance curves (full context, test aggregate).
  std::ofstream curves(ctx.out / "layer_curves.csv");
  curves << "# " << meta << "\n";
  curves << "model,layer,position,score,in_plateau\n";
  for (const auto& m : ctx.cfg.models) {
    const AggregateRows agg =
        load_aggregates(ctx.model_dir(m) / "aggregate.csv");
    std::vector<double> scores;
    for (int l : ctx.layer_set(m)) scores.push_back(agg.rows.at({l, "full"}).second);
    const LayerCurve curve = layer_curve(m.name, scores);
    for (std::size_t i = 0; i < curve.scores.size(); ++i)
      curves << m.name << "," << ctx.layer_set(m)[i] << ","
             << curve.positions[i] << "," << curve.scores[i] << ","
             << (static_cast<int>(i) >= curve.plateau_begin &&
                         static_cast<int>(i) <= curve.plateau_end
                     ? 1
                     : 0)
             << "\n";
  }

  if (ctx.cfg.models.size() >= 2) {
    std::vector<std::string> names;
    std::map<std::string, std::map<std::string, std::vector<TestPrediction>>>
        preds;
    for (const auto& m : ctx.cfg.models) {
      names.push_back(m.name);
      for (const auto& task : ctx.task_defs) {
        std::ifstream in(ctx.model_dir(m) / "predictions" /
                         (task.task_id + ".jsonl"));
        if (!in) throw Error("missing predictions for " + m.name);
        std::string line;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          const auto j = nlohmann::json::parse(line);
          preds[m.name][task.task_id].push_back(TestPrediction{
              j.at("clip_id"), j.at("true_label"), j.at("pred_label"),
              j.value("score", 0.0)});
        }
      }
    }
    const DisagreementResult d = disagreement_matrix(names, preds);
    std::ofstream out(ctx.out / "disagreement.csv");
    out << "# " << meta << "\n";
    out << "x\\y";
    for (const auto& n : d.model_names) out << "," << n;
    out << "\n";
    for (Eigen::Index i = 0; i < d.matrix.rows(); ++i) {
      out << d.model_names[i];
      for (Eigen::Index j = 0; j < d.matrix.cols(); ++j) {
        out << ",";
        if (i != j && std::isfinite(d.matrix(i, j))) out << d.matrix(i, j);
      }
      out << "\n";
    }
    for (const auto& e : d.excluded) out << "# excluded " << e << "\n";
  }
}

// ---- report ----------------------------------------------------------------

struct ProbeRowsFile {
  std::vector<ProbeResultRow> rows;
};

ProbeRowsFile load_probe_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open probe report: " + path.string());
  ProbeRowsFile out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("task,", 0) == 0) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto c = line.find(',', pos);
      f.push_back(line.substr(pos, c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    out.rows.push_back(ProbeResultRow{f[0], std::stoi(f[1]), f[2], f[3],
                                      std::stod(f[4]), std::stod(f[5]),
                                      f[6] == "1"});
  }
  return out;
}

void stage_report(Ctx& ctx) {
  build_corpus(ctx);
  const fs::path report_dir = ctx.out / "report";
  fs::create_directories(report_dir);
  const std::string meta = "# fingerprint=" + fp_hex(ctx.fingerprint) + "\n";

  std::map<std::string, ProbeRowsFile> probe_rows;
  std::map<std::string, AggregateRows> aggregates;
  for (const auto& m : ctx.cfg.models) {
    probe_rows[m.name] = load_probe_rows(ctx.model_dir(m) / "probe_report.csv");
    aggregates[m.name] = load_aggregates(ctx.model_dir(m) / "aggregate.csv");
  }

  // Best per-task: the (model, layer) pair selected on dev, test reported.
  {
    std::ofstream out(report_dir / "best_per_task.csv");
    out << meta << "task,model,layer,classifier,dev_metric,test_metric\n";
    for (const auto& task : ctx.task_defs) {
      const ProbeResultRow* best = nullptr;
      std::string best_model;
      for (const auto& m : ctx.cfg.models)
        for (const auto& r : probe_rows[m.name].rows) {
          if (r.task_id != task.task_id || r.policy != "full" || !r.chosen)
            continue;
          const bool is_better =
              !best || (task.metric == MetricKind::kEer
                            ? r.dev_metric < best->dev_metric
                            : r.dev_metric > best->dev_metric);
          if (is_better) {
            best = &r;
            best_model = m.name;
          }
        }
      if (best)
        out << task.task_id << "," << best_model << "," << best->layer << ","
            << best->classifier << "," << best->dev_metric << ","
            << best->test_metric << "\n";
    }
  }

  // Best single layer per model (dev-aggregate selection, full context).
  {
    std::ofstream out(report_dir / "best_single_layer.csv");
    out << meta << "model,layer,dev_aggregate,test_aggregate\n";
    for (const auto& m : ctx.cfg.models) {
      const auto& agg = aggregates[m.name];
      const int best = agg.best_layer("full");
      out << m.name << "," << best << "," << agg.rows.at({best, "full"}).first
          << "," << agg.rows.at({best, "full"}).second << "\n";
    }
  }

  // Context sweep: relative accuracy of each window policy against the
  // full-context best layer, plus the per-(model, layer, task) loss table.
  {
    std::ofstream out(report_dir / "context_sweep.csv");
    out << meta;
    out << "# reference (prior large-scale study): relative accuracy "
           "4s=0.99, 3s=0.99, 2s=0.98, 1s=0.96, 0.5s=0.91 of the full "
           "context window; cited for context, not asserted here\n";
    out << "section,model,policy,layer,task,value\n";
    for (const auto& m : ctx.cfg.models) {
      const auto& agg = aggregates[m.name];
      const int best_full = agg.best_layer("full");
      const double full_score = agg.rows.at({best_full, "full"}).second;
      for (const auto& p : ctx.cfg.window_policies) {
        if (p == "full") continue;
        bool present = true;
        try {
          agg.best_layer(p);
        } catch (const Error&) {
          present = false;
        }
        if (!present) {
          std::cerr << "warning: policy " << p << " missing for model "
                    << m.name << "; omitted from context sweep\n";
          continue;
        }
        const int best_w = agg.best_layer(p);
        const double w_score = agg.rows.at({best_w, p}).second;
        out << "relative_accuracy," << m.name << "," << p << "," << best_w
            << ",," << (full_score > 0 ? w_score / full_score : 0.0) << "\n";
      }
    }
    // Accuracy lost per (model, layer, task) for each non-full policy.
    for (const auto& m : ctx.cfg.models)
      for (const auto& task : ctx.task_defs)
        for (const auto& p : ctx.cfg.window_policies) {
          if (p == "full") continue;
          std::map<int, double> full_metric, w_metric;
          for (const auto& r : probe_rows[m.name].rows) {
            if (r.task_id != task.task_id || !r.chosen) continue;
            const double v = task.metric == MetricKind::kEer
                                 ? 1.0 - r.test_metric
                                 : r.test_metric;
            if (r.policy == "full") full_metric[r.layer] = v;
            if (r.policy == p) w_metric[r.layer] = v;
          }
          for (const auto& [layer, v] : w_metric)
            if (full_metric.count(layer))
              out << "accuracy_lost," << m.name << "," << p << "," << layer
                  << "," << task.task_id << "," << (full_metric[layer] - v)
                  << "\n";
        }
  }
}

}  // namespace

RunReport run_pipeline(const RunConfig& cfg,
                       const std::vector<std::string>& stages) {
  Ctx ctx;
  ctx.cfg = cfg;
  ctx.fingerprint = run_config_fingerprint(cfg);
  ctx.config_json = run_config_json(cfg).dump();
  ctx.out = cfg.out_dir;
  fs::create_directories(ctx.out);
  {
    std::ofstream fp(ctx.out / "fingerprint.txt");
    fp << fp_hex(ctx.fingerprint) << "\n";
  }

  RunReport report;
  report.fingerprint = ctx.fingerprint;
  report.out_dir = cfg.out_dir;

  auto stage_outputs = [&](const std::string& name) {
    std::vector<fs::path> outs;
    for (const auto& m : cfg.models) {
      if (name == "pretrain") outs.push_back(ctx.ckpt_path(m));
      if (name == "extract") outs.push_back(ctx.emb_path(m));
      if (name == "probe") outs.push_back(ctx.model_dir(m) / "probe_report.csv");
      if (name == "analyze") outs.push_back(ctx.model_dir(m) / "cka_within.csv");
    }
    if (name == "report") outs.push_back(ctx.out / "report" / "context_sweep.csv");
    return outs;
  };

  for (const auto& name : all_stages()) {
    if (std::find(stages.begin(), stages.end(), name) == stages.end())
      continue;
    StageStatus status;
    status.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (stage_done(ctx, name, stage_outputs(name))) {
        status.skipped = true;
        status.ok = true;
      } else {
        if (name == "synth") stage_synth(ctx);
        else if (name == "pretrain") stage_pretrain(ctx);
        else if (name == "extract") stage_extract(ctx);
        else if (name == "probe") stage_probe(ctx);
        else if (name == "analyze") stage_analyze(ctx);
        else if (name == "report") stage_report(ctx);
        mark_stage(ctx, name);
        status.ok = true;
      }
    } catch (const std::exception& e) {
      status.ok = false;
      status.detail = e.what();
      report.failed_stage = name;
    }
    status.wall_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    report.stages.push_back(status);
    if (!report.failed_stage.empty()) break;
  }

  // Execution summary; wall-clock lives here and only here so the report
  // tables stay byte-identical across runs.
  nlohmann::json j;
  j["fingerprint"] = fp_hex(ctx.fingerprint);
  j["out_dir"] = cfg.out_dir;
  j["failed_stage"] = report.failed_stage;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : report.stages)
    j["stages"].push_back({{"name", s.name},
                           {"ok", s.ok},
                           {"skipped", s.skipped},
                           {"wall_s", s.wall_s},
                           {"detail", s.detail}});
  std::ofstream out(ctx.out / "run_report.json");
  out << j.dump(2) << "\n";
  return report;
}

}  // namespace cap
