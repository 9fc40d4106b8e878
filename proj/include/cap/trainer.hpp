// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <vector>

#include "cap/audio.hpp"
#include "cap/checkpoint.hpp"
#include "cap/pretrain.hpp"

namespace cap {

struct TrainLogRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double contrastive_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  std::string checkpoint_path;  // empty: no checkpoints written
  std::string metrics_csv;      // empty: no metrics file
  std::uint64_t fingerprint = 0;
  std::string config_json;
};

struct TrainResult {
  Checkpoint<float> checkpoint;
  std::vector<TrainLogRow> log;
  bool diverged = false;
};

inline void write_metrics_csv(const std::string& path,
                              const std::vector<TrainLogRow>& log) {
  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp);
  if (!out) throw Error("cannot write metrics: " + path);
  out << "step,loss,contrastive_accuracy,lr\n";
  char buf[128];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%lld,%.8g,%.6g,%.8g\n",
                  static_cast<long long>(r.step), r.loss,
                  r.contrastive_accuracy, r.lr);
    out << buf;
  }
  out.close();
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("cannot finalize metrics: " + path);
}

// Masked contrastive pretraining over a clip corpus. Single-threaded and
// fully deterministic under a fixed seed; clips are drawn with replacement,
// gradients are averaged over the batch. On divergence the last finite-loss
// checkpoint stays on disk and the result is flagged.
inline TrainResult train(const std::vector<AudioClip>& corpus,
                         const ModelConfig& cfg, const PretrainConfig& pt,
                         std::uint64_t seed, const TrainOptions& opts = {}) {
  if (corpus.empty()) throw Error("train: empty corpus");
  cfg.validate();

  TrainResult result;
  ParamStore<float>& store = result.checkpoint.store;
  init_model_params(store, cfg, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);

  const MelConfig mel_cfg{.mel_bins = cfg.featenc.mel_bins};
  std::vector<Matf> mels;
  mels.reserve(corpus.size());
  for (const auto& clip : corpus) mels.push_back(log_mel(clip, mel_cfg).frames);

  Adam<float> adam(pt);
  auto snapshot = [&](std::uint64_t step) {
    result.checkpoint.step = step;
    result.checkpoint.fingerprint = opts.fingerprint;
    result.checkpoint.config_json = opts.config_json;
    result.checkpoint.rng_state = rng_to_string(rng);
    if (!opts.checkpoint_path.empty())
      save_checkpoint(opts.checkpoint_path, result.checkpoint);
  };

  snapshot(0);
  for (int step = 0; step < pt.steps; ++step) {
    store.zero_grads();
    double batch_loss = 0.0, batch_acc = 0.0;
    for (int b = 0; b < pt.batch_size; ++b) {
      const auto ci = uniform_index(rng, corpus.size());
      const Matf& mel = mels[ci];
      const int t_enc = encoded_num_frames(static_cast<int>(mel.rows()),
                                           cfg.featenc);
      const MaskPlan plan =
          sample_mask(t_enc, pt.mask_start_prob, pt.mask_span, rng);
      Graph<float> g;
      const int mel_node = g.leaf(mel);
      const ContrastiveBuild built =
          build_contrastive_loss(g, store, cfg, mel_node, plan, pt, rng);
      const int scaled = g.scale(built.loss_node, 1.0f / pt.batch_size);
      g.backward(scaled);
      batch_loss += g.val(built.loss_node)(0, 0) / pt.batch_size;
      batch_acc += built.accuracy / pt.batch_size;
    }
    if (!std::isfinite(batch_loss)) {
      result.diverged = true;
      break;
    }
    const double lr = adam.current_lr();
    adam.update(store);
    result.log.push_back(TrainLogRow{step + 1, batch_loss, batch_acc, lr});
    if (pt.checkpoint_every > 0 && (step + 1) % pt.checkpoint_every == 0)
      snapshot(step + 1);
  }
  if (!result.diverged) snapshot(result.log.size());
  if (!opts.metrics_csv.empty()) write_metrics_csv(opts.metrics_csv, result.log);
  return result;
}

}  // namespace cap
