// SPDX-License-Identifier: Apache-2.0
//
// Conformer stack: shapes, identity limit, a straight-line single-block
// oracle, gradients, relative-position bias behavior.
#include <cmath>
#include <string>
#include <vector>

#include "cap/conformer.hpp"
#include "doctest.h"

using cap::EncoderConfig;
using cap::Graph;
using cap::ParamStore;
using Mat = cap::Matd;
using Vec = cap::Vecd;

namespace {

Mat randm(cap::Rng& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = s * cap::gaussian(rng);
  return m;
}

EncoderConfig tiny_cfg(int layers, int heads, int dim, bool rel = false) {
  EncoderConfig cfg;
  cfg.num_layers = layers;
  cfg.num_heads = heads;
  cfg.model_dim = dim;
  cfg.ffn_expansion = 2;
  cfg.conv_kernel = 4;
  cfg.relative_attention = rel;
  cfg.rel_max_offset = 3;
  return cfg;
}

// Plain-Eigen re-implementation of one block, written independently of the
// tape ops so the two paths can be compared.
struct PlainBlock {
  ParamStore<double>& store;
  const EncoderConfig& cfg;
  std::string b;

  Mat layernorm(const Mat& x, const std::string& p) const {
    const double eps = 1e-5;
    const Vec g = store[p + ".g"].value.row(0).transpose();
    const Vec be = store[p + ".b"].value.row(0).transpose();
    Mat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mu = x.row(r).mean();
      double var = 0;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double d = x(r, j) - mu;
        var += d * d;
      }
      var /= static_cast<double>(x.cols());
      const double inv = 1.0 / std::sqrt(var + eps);
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        y(r, j) = (x(r, j) - mu) * inv * g[j] + be[j];
    }
    return y;
  }

  Mat linear(const Mat& x, const std::string& p) const {
    Mat y = x * store[p + ".w"].value;
    y.rowwise() += store[p + ".b"].value.row(0);
    return y;
  }

  static Mat swish(const Mat& x) {
    return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
  }

  Mat half_ffn(const Mat& x, const std::string& p) const {
    Mat h = linear(swish(linear(layernorm(x, p + ".ln"), p + ".fc1")),
                   p + ".fc2");
    return x + 0.5 * store[p + ".scale"].value(0, 0) * h;
  }

  Mat attention(const Mat& x) const {
    const std::string p = b + ".att";
    const int dh = cfg.model_dim / cfg.num_heads;
    const Mat h = layernorm(x, p + ".ln");
    const Mat q = linear(h, p + ".q"), k = linear(h, p + ".k"),
              v = linear(h, p + ".v");
    Mat cat(x.rows(), cfg.model_dim);
    for (int hd = 0; hd < cfg.num_heads; ++hd) {
      Mat s = q.middleCols(hd * dh, dh) * k.middleCols(hd * dh, dh).transpose() /
              std::sqrt(static_cast<double>(dh));
      if (cfg.relative_attention) {
        const Mat& rel = store[p + ".rel"].value;
        for (Eigen::Index i = 0; i < s.rows(); ++i)
          for (Eigen::Index j = 0; j < s.cols(); ++j) {
            auto off = std::clamp<Eigen::Index>(j - i, -cfg.rel_max_offset,
                                                cfg.rel_max_offset);
            s(i, j) += rel(hd, off + cfg.rel_max_offset);
          }
      }
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp();
        s.row(i) /= s.row(i).sum();
      }
      cat.middleCols(hd * dh, dh) = s * v.middleCols(hd * dh, dh);
    }
    return x + store[p + ".scale"].value(0, 0) * linear(cat, p + ".o");
  }

  Mat conv(const Mat& x) const {
    const std::string p = b + ".conv";
    Mat h = linear(layernorm(x, p + ".ln"), p + ".pw1");
    const Eigen::Index d = cfg.model_dim;
    Mat glu(x.rows(), d);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index j = 0; j < d; ++j)
        glu(r, j) = h(r, j) / (1.0 + std::exp(-h(r, d + j)));
    const Mat& w = store[p + ".dw.w"].value;
    const Eigen::Index pad_left = (cfg.conv_kernel - 1) / 2;
    Mat dw = Mat::Zero(x.rows(), d);
    for (Eigen::Index to = 0; to < x.rows(); ++to)
      for (int u = 0; u < cfg.conv_kernel; ++u) {
        const auto ti =
            std::clamp<Eigen::Index>(to + u - pad_left, 0, x.rows() - 1);
        dw.row(to).array() += glu.row(ti).array() * w.row(u).array();
      }
    dw.rowwise() += store[p + ".dw.b"].value.row(0);
    Mat out = linear(swish(layernorm(dw, p + ".mid_ln")), p + ".pw2");
    return x + store[p + ".scale"].value(0, 0) * out;
  }

  Mat forward(const Mat& x) const {
    Mat h = half_ffn(x, b + ".ffn1");
    h = attention(h);
    h = conv(h);
    h = half_ffn(h, b + ".ffn2");
    const double blend = store[b + ".out.blend"].value(0, 0);
    return h + blend * (layernorm(h, b + ".out.ln") - h);
  }
};

}  // namespace

TEST_CASE("shapes and attention maps are well formed") {
  EncoderConfig cfg = tiny_cfg(2, 2, 8);
  ParamStore<double> store;
  cap::Rng rng(21);
  cap::init_conformer_params(store, cfg, rng);
  Graph<double> g;
  Mat x = randm(rng, 10, 8, 0.5);
  const auto trace = cap::conformer_forward(g, store, cfg, g.leaf(x), true);
  REQUIRE(trace.layer_nodes.size() == 3);
  REQUIRE(trace.attn_nodes.size() == 2);
  for (const auto& heads : trace.attn_nodes) {
    REQUIRE(heads.size() == 2);
    for (int a : heads) {
      const Mat& m = g.val(a);
      REQUIRE(m.rows() == 10);
      REQUIRE(m.cols() == 10);
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        CHECK(m.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  for (int n : trace.layer_nodes) {
    CHECK(g.val(n).rows() == 10);
    CHECK(g.val(n).cols() == 8);
  }
}

TEST_CASE("zero branch scales and zero blend make every layer an identity") {
  EncoderConfig cfg = tiny_cfg(3, 2, 8);
  ParamStore<double> store;
  cap::Rng rng(22);
  cap::init_conformer_params(store, cfg, rng);
  for (auto& e : store.entries())
    if (e.name.find(".scale") != std::string::npos ||
        e.name.find(".blend") != std::string::npos)
      e.value.setZero();
  Graph<double> g;
  Mat x = randm(rng, 7, 8);
  const auto trace = cap::conformer_forward(g, store, cfg, g.leaf(x));
  for (int n : trace.layer_nodes) CHECK(g.val(n) == x);
}

TEST_CASE("single block matches an independent straight-line computation") {
  for (const bool rel : {false, true}) {
    CAPTURE(rel);
    EncoderConfig cfg = tiny_cfg(1, 2, 8, rel);
    ParamStore<double> store;
    cap::Rng rng(23);
    cap::init_conformer_params(store, cfg, rng);
    // Nonzero biases and detuned scales so nothing cancels by accident.
    for (auto& e : store.entries())
      if (e.name.size() > 2 && e.name.substr(e.name.size() - 2) == ".b")
        for (Eigen::Index i = 0; i < e.value.size(); ++i)
          e.value.data()[i] = 0.1 * cap::gaussian(rng);
    store["cf.b0.ffn1.scale"].value(0, 0) = 0.7;
    store["cf.b0.att.scale"].value(0, 0) = 1.3;
    store["cf.b0.conv.scale"].value(0, 0) = 0.9;
    store["cf.b0.out.blend"].value(0, 0) = 0.6;

    Mat x = randm(rng, 9, 8, 0.8);
    Graph<double> g;
    const auto trace = cap::conformer_forward(g, store, cfg, g.leaf(x));
    const PlainBlock plain{store, cfg, "cf.b0"};
    const Mat expect = plain.forward(x);
    CHECK((g.val(trace.layer_nodes[1]) - expect).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("gradient check through one block") {
  EncoderConfig cfg = tiny_cfg(1, 2, 4, true);
  cfg.conv_kernel = 3;
  ParamStore<double> store;
  cap::Rng rng(24);
  cap::init_conformer_params(store, cfg, rng);
  const int t = 5;
  Mat x = randm(rng, t, 4, 0.5);
  Mat xgrad = Mat::Zero(t, 4);
  Mat w = randm(rng, t, 4);

  auto eval = [&](bool back) {
    store.zero_grads();
    xgrad.setZero();
    Graph<double> g;
    const auto trace =
        cap::conformer_forward(g, store, cfg, g.param(x, &xgrad));
    const int h = g.hadamard(trace.layer_nodes.back(), g.leaf(w));
    const int root = g.matmul(g.matmul(g.leaf(Mat::Ones(1, t)), h),
                              g.leaf(Mat::Ones(4, 1)));
    if (back) g.backward(root);
    return g.val(root)(0, 0);
  };
  eval(true);
  std::vector<Mat*> values{&x};
  std::vector<Mat> grads{xgrad};
  for (auto& e : store.entries()) {
    values.push_back(&e.value);
    grads.push_back(e.grad);
  }
  const double eps = 1e-5;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (Eigen::Index k = 0; k < values[i]->size(); ++k) {
      const double orig = values[i]->data()[k];
      values[i]->data()[k] = orig + eps;
      const double fp = eval(false);
      values[i]->data()[k] = orig - eps;
      const double fm = eval(false);
      values[i]->data()[k] = orig;
      const double num = (fp - fm) / (2 * eps);
      const double ana = grads[i].data()[k];
      CHECK(std::abs(num - ana) <=
            1e-4 * std::max({1.0, std::abs(num), std::abs(ana)}));
    }
}

TEST_CASE("relative bias depends only on clipped offset") {
  Graph<double> g;
  cap::Rng rng(25);
  Mat table = randm(rng, 1, 7);  // max_offset 3
  const int t = 12;
  const int biased =
      g.add_rel_bias(g.leaf(Mat::Zero(t, t)), g.leaf(table), 0, 3);
  const Mat& B = g.val(biased);
  for (Eigen::Index i = 0; i + 4 < t; ++i)
    for (Eigen::Index d = -3; d <= 3; ++d)
      if (i + d >= 0 && i + 4 + d < t)
        CHECK(B(i, i + d) == B(i + 4, i + 4 + d));
  // Offsets past the clip range share the edge bucket.
  CHECK(B(0, 5) == B(0, 3));
  CHECK(B(0, 11) == B(0, 3));
  CHECK(B(11, 5) == B(11, 8));
  CHECK(B(11, 0) == B(11, 8));
}

TEST_CASE("zeroed relative table reproduces the absolute-attention model") {
  EncoderConfig rel_cfg = tiny_cfg(2, 2, 8, true);
  EncoderConfig abs_cfg = rel_cfg;
  abs_cfg.relative_attention = false;
  ParamStore<double> rel_store, abs_store;
  cap::Rng rng(26);
  cap::init_conformer_params(rel_store, rel_cfg, rng);
  cap::Rng rng2(27);
  cap::init_conformer_params(abs_store, abs_cfg, rng2);
  for (auto& e : abs_store.entries()) e.value = rel_store[e.name].value;
  for (auto& e : rel_store.entries())
    if (e.name.find(".att.rel") != std::string::npos) e.value.setZero();
  cap::Rng rng3(28);
  Mat x = randm(rng3, 6, 8);
  Graph<double> g1, g2;
  const auto t1 = cap::conformer_forward(g1, rel_store, rel_cfg, g1.leaf(x));
  const auto t2 = cap::conformer_forward(g2, abs_store, abs_cfg, g2.leaf(x));
  CHECK(g1.val(t1.layer_nodes.back()) == g2.val(t2.layer_nodes.back()));
}

TEST_CASE("every output frame sees a perturbation anywhere in the input") {
  EncoderConfig cfg = tiny_cfg(1, 2, 8);
  ParamStore<double> store;
  cap::Rng rng(29);
  cap::init_conformer_params(store, cfg, rng);
  Mat x = randm(rng, 6, 8);
  Graph<double> g1;
  const Mat base = g1.val(
      cap::conformer_forward(g1, store, cfg, g1.leaf(x)).layer_nodes.back());
  Mat x2 = x;
  x2.row(5).array() += 0.5;
  Graph<double> g2;
  const Mat pert = g2.val(
      cap::conformer_forward(g2, store, cfg, g2.leaf(x2)).layer_nodes.back());
  for (Eigen::Index r = 0; r < 6; ++r)
    CHECK((pert.row(r) - base.row(r)).norm() > 0.0);
}

TEST_CASE("non-finite activations raise an error that names the layer") {
  EncoderConfig cfg = tiny_cfg(2, 2, 8);
  ParamStore<double> store;
  cap::Rng rng(30);
  cap::init_conformer_params(store, cfg, rng);
  store["cf.b1.ffn1.fc1.w"].value(0, 0) = std::nan("");
  Graph<double> g;
  Mat x = randm(rng, 5, 8);
  CHECK_THROWS_WITH_AS(
      (void)cap::conformer_forward(g, store, cfg, g.leaf(x)),
      doctest::Contains("layer 2"), cap::Error);
}
