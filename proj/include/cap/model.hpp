// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cap/conformer.hpp"
#include "cap/featenc.hpp"
#include "cap/mel.hpp"

namespace cap {

struct ModelConfig {
  FeatEncConfig featenc;
  EncoderConfig encoder;

  void validate() const {
    featenc.validate();
    encoder.validate();
    if (featenc.output_dim() != encoder.model_dim)
      throw Error("featenc output_dim must equal encoder model_dim");
  }
};

template <typename T>
void init_model_params(ParamStore<T>& store, const ModelConfig& cfg,
                       std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  init_featenc_params(store, cfg.featenc, rng);
  init_conformer_params(store, cfg.encoder, rng);
  const int d = cfg.encoder.model_dim;
  store.add("mask_embed", 1, d);
  detail::init_tensor(store["mask_embed"].value, T(0.1), rng);
  store.add("tgt.w", d, d);
  detail::init_tensor(store["tgt.w"].value, std::sqrt(T(1) / T(d)), rng);
  store.add("tgt.b", 1, d);
}

// Per-layer 25 Hz activations plus attention maps for one clip, as plain
// values. Index 0 holds the feature-encoder output.
template <typename T>
struct ActivationStack {
  std::vector<Matrix<T>> layers;                 // (L+1) x (T' x D)
  std::vector<std::vector<Matrix<T>>> attention; // L x H x (T' x T')
};

// Forward-only pass over a mel spectrogram (no masking, no loss).
template <typename T>
ActivationStack<T> run_encoder(ParamStore<T>& store, const ModelConfig& cfg,
                               const Matrix<T>& mel_frames,
                               bool capture_attention = false) {
  Graph<T> g;
  const int mel_node = g.leaf(mel_frames);
  const int enc = featenc_forward(g, store, cfg.featenc, mel_node);
  const ForwardTrace trace =
      conformer_forward(g, store, cfg.encoder, enc, capture_attention);
  ActivationStack<T> acts;
  for (int id : trace.layer_nodes) acts.layers.push_back(g.val(id));
  if (capture_attention)
    for (const auto& layer : trace.attn_nodes) {
      std::vector<Matrix<T>> heads;
      for (int id : layer) heads.push_back(g.val(id));
      acts.attention.push_back(std::move(heads));
    }
  return acts;
}

}  // namespace cap
