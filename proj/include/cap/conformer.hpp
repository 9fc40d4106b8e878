// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "cap/graph.hpp"

namespace cap {

struct EncoderConfig {
  int num_layers = 8;
  int num_heads = 4;
  int model_dim = 64;
  int ffn_expansion = 4;
  int conv_kernel = 8;
  bool relative_attention = false;
  int rel_max_offset = 64;
  double dropout_rate = 0.0;  // 0 at extraction time

  void validate() const {
    if (num_layers < 1) throw Error("encoder: num_layers must be >= 1");
    if (model_dim % num_heads != 0)
      throw Error("encoder: model_dim must be divisible by num_heads");
  }
};

// Per-clip forward products: tape node ids per layer output (index 0 is
// the feature-encoder output) and per layer/head attention maps.
struct ForwardTrace {
  std::vector<int> layer_nodes;               // size L+1
  std::vector<std::vector<int>> attn_nodes;   // L x H, empty when not captured
};

namespace detail {

template <typename T>
void init_tensor(Matrix<T>& w, T std_dev, Rng& rng) {
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w.data()[i] = std_dev * static_cast<T>(gaussian(rng));
}

}  // namespace detail

template <typename T>
void init_conformer_params(ParamStore<T>& store, const EncoderConfig& cfg,
                           Rng& rng) {
  cfg.validate();
  const int d = cfg.model_dim;
  const int e = cfg.ffn_expansion * d;
  const T wstd = std::sqrt(T(1) / T(d));
  auto add_ln = [&](const std::string& p) {
    store.add(p + ".g", 1, d);
    store[p + ".g"].value.setOnes();
    store.add(p + ".b", 1, d);
  };
  auto add_linear = [&](const std::string& p, int rows, int cols, T std_dev) {
    store.add(p + ".w", rows, cols);
    detail::init_tensor(store[p + ".w"].value, std_dev, rng);
    store.add(p + ".b", 1, cols);
  };
  auto add_scale = [&](const std::string& name) {
    store.add(name, 1, 1);
    store[name].value(0, 0) = T(1);
  };

  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string b = "cf.b" + std::to_string(l);
    for (const char* ffn : {".ffn1", ".ffn2"}) {
      add_ln(b + ffn + ".ln");
      add_linear(b + ffn + ".fc1", d, e, wstd);
      add_linear(b + ffn + ".fc2", e, d, std::sqrt(T(1) / T(e)));
      add_scale(b + ffn + ".scale");
    }
    add_ln(b + ".att.ln");
    for (const char* m : {".att.q", ".att.k", ".att.v", ".att.o"})
      add_linear(b + m, d, d, wstd);
    if (cfg.relative_attention) {
      store.add(b + ".att.rel", cfg.num_heads, 2 * cfg.rel_max_offset + 1);
      detail::init_tensor(store[b + ".att.rel"].value, T(0.02), rng);
    }
    add_scale(b + ".att.scale");
    add_ln(b + ".conv.ln");
    add_linear(b + ".conv.pw1", d, 2 * d, wstd);
    store.add(b + ".conv.dw.w", cfg.conv_kernel, d);
    detail::init_tensor(store[b + ".conv.dw.w"].value,
                        std::sqrt(T(1) / T(cfg.conv_kernel)), rng);
    store.add(b + ".conv.dw.b", 1, d);
    add_ln(b + ".conv.mid_ln");
    add_linear(b + ".conv.pw2", d, d, wstd);
    add_scale(b + ".conv.scale");
    add_ln(b + ".out.ln");
    add_scale(b + ".out.blend");
  }
}

namespace detail {

template <typename T>
int linear(Graph<T>& g, ParamStore<T>& store, const std::string& p, int x) {
  return g.add_row(g.matmul(x, store.node(g, p + ".w")),
                   store.node(g, p + ".b"));
}

template <typename T>
int half_ffn(Graph<T>& g, ParamStore<T>& store, const std::string& p, int x) {
  int h = g.layernorm_rows(x, store.node(g, p + ".ln.g"),
                           store.node(g, p + ".ln.b"));
  h = g.swish(linear(g, store, p + ".fc1", h));
  h = linear(g, store, p + ".fc2", h);
  return g.add_scaled(x, h, store.node(g, p + ".scale"), T(0.5));
}

template <typename T>
int self_attention(Graph<T>& g, ParamStore<T>& store, const EncoderConfig& cfg,
                   const std::string& p, int x, std::vector<int>* attn_out) {
  const int dh = cfg.model_dim / cfg.num_heads;
  int h = g.layernorm_rows(x, store.node(g, p + ".ln.g"),
                           store.node(g, p + ".ln.b"));
  const int q = linear(g, store, p + ".q", h);
  const int k = linear(g, store, p + ".k", h);
  const int v = linear(g, store, p + ".v", h);
  const int rel = cfg.relative_attention ? store.node(g, p + ".rel") : -1;
  std::vector<int> heads;
  for (int hd = 0; hd < cfg.num_heads; ++hd) {
    int scores = g.scale(g.matmul_nt(g.slice_cols(q, hd * dh, dh),
                                     g.slice_cols(k, hd * dh, dh)),
                         T(1) / std::sqrt(T(dh)));
    if (rel >= 0)
      scores = g.add_rel_bias(scores, rel, hd, cfg.rel_max_offset);
    const int attn = g.softmax_rows(scores);
    if (attn_out) attn_out->push_back(attn);
    heads.push_back(g.matmul(attn, g.slice_cols(v, hd * dh, dh)));
  }
  h = linear(g, store, p + ".o", g.concat_cols(heads));
  return g.add_scaled(x, h, store.node(g, p + ".scale"));
}

template <typename T>
int conv_module(Graph<T>& g, ParamStore<T>& store, const EncoderConfig& cfg,
                const std::string& p, int x) {
  int h = g.layernorm_rows(x, store.node(g, p + ".ln.g"),
                           store.node(g, p + ".ln.b"));
  h = g.glu(linear(g, store, p + ".pw1", h));
  h = g.depthwise_conv1d(h, store.node(g, p + ".dw.w"),
                         store.node(g, p + ".dw.b"), cfg.conv_kernel);
  h = g.layernorm_rows(h, store.node(g, p + ".mid_ln.g"),
                       store.node(g, p + ".mid_ln.b"));
  h = g.swish(h);
  h = linear(g, store, p + ".pw2", h);
  return g.add_scaled(x, h, store.node(g, p + ".scale"));
}

}  // namespace detail

// Full non-causal stack: half-FFN, self-attention, conv module, half-FFN,
// then the trailing layer norm applied as x + blend * (LN(x) - x) so a
// zero blend (with zero branch scales) leaves the input untouched.
template <typename T>
ForwardTrace conformer_forward(Graph<T>& g, ParamStore<T>& store,
                               const EncoderConfig& cfg, int input_node,
                               bool capture_attention = false) {
  cfg.validate();
  ForwardTrace trace;
  trace.layer_nodes.push_back(input_node);
  int x = input_node;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string b = "cf.b" + std::to_string(l);
    x = detail::half_ffn(g, store, b + ".ffn1", x);
    std::vector<int> attn;
    x = detail::self_attention(g, store, cfg, b + ".att", x,
                               capture_attention ? &attn : nullptr);
    trace.attn_nodes.push_back(std::move(attn));
    x = detail::conv_module(g, store, cfg, b + ".conv", x);
    x = detail::half_ffn(g, store, b + ".ffn2", x);
    const int ln = g.layernorm_rows(x, store.node(g, b + ".out.ln.g"),
                                    store.node(g, b + ".out.ln.b"));
    x = g.add_scaled(x, g.linear_comb(ln, x, T(1), T(-1)),
                     store.node(g, b + ".out.blend"));
    if (!g.val(x).allFinite())
      throw Error("non-finite activation in conformer layer " +
                  std::to_string(l + 1));
    trace.layer_nodes.push_back(x);
  }
  return trace;
}

}  // namespace cap
