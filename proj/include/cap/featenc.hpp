// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "cap/graph.hpp"

namespace cap {

// 3-layer strided 1-D conv stack: 100 Hz mel frames -> 25 Hz features.
struct FeatEncConfig {
  int mel_bins = 80;
  std::array<int, 3> kernels = {3, 3, 3};
  std::array<int, 3> strides = {2, 2, 1};
  std::array<int, 3> channels = {64, 64, 64};  // channels[2] = model dim

  int output_dim() const { return channels[2]; }
  void validate() const {
    if (strides[0] * strides[1] * strides[2] != 4)
      throw Error("featenc: stride product must be 4");
  }
};

inline int encoded_num_frames(int mel_frames, const FeatEncConfig& cfg) {
  if (mel_frames < 4) throw Error("too few frames for subsampling");
  int t = mel_frames;
  for (int s : cfg.strides) t = (t + s - 1) / s;
  return t;
}

template <typename T>
void init_featenc_params(ParamStore<T>& store, const FeatEncConfig& cfg,
                         Rng& rng) {
  cfg.validate();
  int cin = cfg.mel_bins;
  for (int l = 0; l < 3; ++l) {
    const int cout = cfg.channels[l];
    const int k = cfg.kernels[l];
    store.add("fe.l" + std::to_string(l) + ".w", k * cin, cout);
    store.add("fe.l" + std::to_string(l) + ".b", 1, cout);
    auto& w = store["fe.l" + std::to_string(l) + ".w"].value;
    const T std_dev = std::sqrt(T(2) / T(k * cin));
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w.data()[i] = std_dev * static_cast<T>(gaussian(rng));
    cin = cout;
  }
}

// Swish after every conv layer.
template <typename T>
int featenc_forward(Graph<T>& g, ParamStore<T>& store,
                    const FeatEncConfig& cfg, int mel_node) {
  if (g.val(mel_node).rows() < 4)
    throw Error("too few frames for subsampling");
  int x = mel_node;
  for (int l = 0; l < 3; ++l) {
    const std::string p = "fe.l" + std::to_string(l);
    x = g.conv1d(x, store.node(g, p + ".w"), store.node(g, p + ".b"),
                 cfg.kernels[l], cfg.strides[l]);
    x = g.swish(x);
  }
  return x;
}

}  // namespace cap
