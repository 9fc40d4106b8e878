// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "cap/mask.hpp"
#include "cap/model.hpp"

namespace cap {

struct PretrainConfig {
  double mask_start_prob = 0.065;
  int mask_span = 10;  // ~400 ms at 25 Hz
  double kappa = 0.1;
  int num_distractors = 10;
  double learning_rate = 3e-4;
  int warmup_steps = 100;
  double grad_clip = 1.0;
  int batch_size = 8;
  int steps = 2000;
  int checkpoint_every = 500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// Tape handles plus bookkeeping for one clip's contrastive loss.
struct ContrastiveBuild {
  int loss_node = -1;
  int sims_node = -1;
  double accuracy = 0.0;   // fraction of positions where the target wins
  int effective_k = 0;     // distractor count actually used
  bool k_reduced = false;
  std::vector<std::vector<int>> candidates;
};

// Draws K distinct distractor columns per masked position (uniform over the
// other masked positions of the same clip), builds the InfoNCE loss between
// the masked-position context vectors and the linear-projection targets.
template <typename T>
ContrastiveBuild build_contrastive_loss(Graph<T>& g, ParamStore<T>& store,
                                        const ModelConfig& cfg, int mel_node,
                                        const MaskPlan& plan,
                                        const PretrainConfig& pt, Rng& rng) {
  const int enc = featenc_forward(g, store, cfg.featenc, mel_node);
  const int targets_all = g.add_row(g.matmul(enc, store.node(g, "tgt.w")),
                                    store.node(g, "tgt.b"));
  const int masked_in =
      g.replace_rows(enc, plan.masked, store.node(g, "mask_embed"));
  const ForwardTrace trace = conformer_forward(g, store, cfg.encoder, masked_in);
  const int context = g.gather_rows(trace.layer_nodes.back(), plan.masked);
  const int targets = g.gather_rows(targets_all, plan.masked);
  const int sims = g.matmul_nt(g.l2norm_rows(context), g.l2norm_rows(targets));

  const int p = static_cast<int>(plan.masked.size());
  ContrastiveBuild out;
  out.effective_k = std::min(pt.num_distractors, p - 1);
  out.k_reduced = out.effective_k < pt.num_distractors;
  if (pt.num_distractors < 1) throw Error("contrastive loss requires K >= 1");

  std::vector<int> pool(p);
  for (int i = 0; i < p; ++i) {
    // Partial Fisher-Yates over the other masked positions.
    int n = 0;
    for (int j = 0; j < p; ++j)
      if (j != i) pool[n++] = j;
    std::vector<int> cand{i};
    for (int k = 0; k < out.effective_k; ++k) {
      const int pick = k + static_cast<int>(uniform_index(rng, n - k));
      std::swap(pool[k], pool[pick]);
      cand.push_back(pool[k]);
    }
    out.candidates.push_back(std::move(cand));
  }

  const auto& s = g.val(sims);
  int wins = 0;
  for (int i = 0; i < p; ++i) {
    bool win = true;
    for (std::size_t j = 1; j < out.candidates[i].size(); ++j)
      if (s(i, out.candidates[i][j]) >= s(i, i)) win = false;
    wins += win;
  }
  out.accuracy = p > 0 ? static_cast<double>(wins) / p : 0.0;
  out.sims_node = sims;
  out.loss_node = g.info_nce(sims, out.candidates, static_cast<T>(pt.kappa));
  return out;
}

// Adam with linear warmup and global-norm gradient clipping.
template <typename T>
class Adam {
 public:
  Adam(const PretrainConfig& cfg) : cfg_(cfg) {}

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  double current_lr() const {
    const double warm =
        cfg_.warmup_steps > 0
            ? std::min(1.0, static_cast<double>(step_ + 1) / cfg_.warmup_steps)
            : 1.0;
    return cfg_.learning_rate * warm;
  }

  void update(ParamStore<T>& store) {
    double sq = 0.0;
    for (const auto& e : store.entries()) sq += e.grad.squaredNorm();
    const double norm = std::sqrt(sq);
    const T clip_scale =
        norm > cfg_.grad_clip ? static_cast<T>(cfg_.grad_clip / norm) : T(1);

    const double lr = current_lr();
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, step_);
    for (auto& e : store.entries()) {
      Matrix<T> grad = clip_scale * e.grad;
      e.m = static_cast<T>(cfg_.adam_beta1) * e.m +
            static_cast<T>(1.0 - cfg_.adam_beta1) * grad;
      e.v = static_cast<T>(cfg_.adam_beta2) * e.v +
            static_cast<T>(1.0 - cfg_.adam_beta2) * grad.cwiseProduct(grad);
      e.value.array() -=
          static_cast<T>(lr) * (e.m.array() / static_cast<T>(bc1)) /
          ((e.v.array() / static_cast<T>(bc2)).sqrt() +
           static_cast<T>(cfg_.adam_eps));
    }
  }

 private:
  PretrainConfig cfg_;
  std::int64_t step_ = 0;
};

}  // namespace cap
