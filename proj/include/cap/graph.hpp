// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cap/common.hpp"

namespace cap {

// Reverse-mode tape over dense matrices. Nodes are created in topological
// order by construction; backward() walks the tape in reverse. Values are
// row-major in time: rows = frames, cols = feature dimensions.
template <typename T>
class Graph {
 public:
  using Mat = Matrix<T>;

  int leaf(Mat v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Parameter leaf: value is copied in, gradient is accumulated into
  // *external_grad when backward() reaches this node.
  int param(const Mat& value, Mat* external_grad) {
    const int id = leaf(value);
    nodes_[id].back = [id, external_grad](Graph& g) {
      *external_grad += g.grad(id);
    };
    return id;
  }

  const Mat& val(int id) const { return nodes_[id].val; }
  Mat& grad(int id) { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  int add(int a, int b) {
    return make(val(a) + val(b), [a, b](Graph& g, const Mat& G) {
      g.grad(a) += G;
      g.grad(b) += G;
    });
  }

  int linear_comb(int a, int b, T ca, T cb) {
    return make(ca * val(a) + cb * val(b),
                [a, b, ca, cb](Graph& g, const Mat& G) {
                  g.grad(a) += ca * G;
                  g.grad(b) += cb * G;
                });
  }

  int scale(int a, T c) {
    return make(c * val(a),
                [a, c](Graph& g, const Mat& G) { g.grad(a) += c * G; });
  }

  // A + coeff * alpha * B, alpha a 1x1 node (learned residual scale).
  int add_scaled(int a, int b, int alpha, T coeff = T(1)) {
    const T s = coeff * val(alpha)(0, 0);
    return make(val(a) + s * val(b),
                [a, b, alpha, coeff, s](Graph& g, const Mat& G) {
                  g.grad(a) += G;
                  g.grad(b) += s * G;
                  g.grad(alpha)(0, 0) +=
                      coeff * (G.array() * g.val(b).array()).sum();
                });
  }

  int matmul(int a, int b) {
    return make(val(a) * val(b), [a, b](Graph& g, const Mat& G) {
      g.grad(a) += G * g.val(b).transpose();
      g.grad(b) += g.val(a).transpose() * G;
    });
  }

  // A * B^T
  int matmul_nt(int a, int b) {
    return make(val(a) * val(b).transpose(), [a, b](Graph& g, const Mat& G) {
      g.grad(a) += G * g.val(b);
      g.grad(b) += G.transpose() * g.val(a);
    });
  }

  // Broadcast a 1xD bias over rows.
  int add_row(int a, int bias) {
    Mat v = val(a);
    v.rowwise() += val(bias).row(0);
    return make(std::move(v), [a, bias](Graph& g, const Mat& G) {
      g.grad(a) += G;
      g.grad(bias).row(0) += G.colwise().sum();
    });
  }

  int hadamard(int a, int b) {
    return make(val(a).cwiseProduct(val(b)), [a, b](Graph& g, const Mat& G) {
      g.grad(a) += G.cwiseProduct(g.val(b));
      g.grad(b) += G.cwiseProduct(g.val(a));
    });
  }

  int sigmoid(int a) {
    Mat s = val(a).unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
    const int id = make(std::move(s), nullptr);
    nodes_[id].back = [a, id](Graph& g) {
      const Mat& s = g.val(id);
      g.grad(a).array() +=
          g.grad(id).array() * s.array() * (T(1) - s.array());
    };
    return id;
  }

  int swish(int a) {
    Mat s = val(a).unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
    Mat y = val(a).cwiseProduct(s);
    const int id = leaf(std::move(y));
    nodes_[id].back = [a, id, s = std::move(s)](Graph& g) {
      g.grad(a).array() +=
          g.grad(id).array() * s.array() *
          (T(1) + g.val(a).array() * (T(1) - s.array()));
    };
    return id;
  }

  // Gated linear unit over column halves: y = A[:, :F] .* sigmoid(A[:, F:]).
  int glu(int a) {
    const Eigen::Index f = val(a).cols() / 2;
    Mat gate = val(a).rightCols(f).unaryExpr(
        [](T x) { return T(1) / (T(1) + std::exp(-x)); });
    Mat y = val(a).leftCols(f).cwiseProduct(gate);
    const int id = leaf(std::move(y));
    nodes_[id].back = [a, id, f, gate = std::move(gate)](Graph& g) {
      const Mat& G = g.grad(id);
      g.grad(a).leftCols(f) += G.cwiseProduct(gate);
      g.grad(a).rightCols(f).array() +=
          G.array() * g.val(a).leftCols(f).array() * gate.array() *
          (T(1) - gate.array());
    };
    return id;
  }

  int softmax_rows(int a) {
    Mat y = val(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const T m = y.row(r).maxCoeff();
      y.row(r) = (y.row(r).array() - m).exp();
      y.row(r) /= y.row(r).sum();
    }
    const int id = leaf(std::move(y));
    nodes_[id].back = [a, id](Graph& g) {
      const Mat& S = g.val(id);
      const Mat& G = g.grad(id);
      Vector<T> dot = (G.array() * S.array()).rowwise().sum();
      g.grad(a).array() += (G.array().colwise() - dot.array()) * S.array();
    };
    return id;
  }

  int layernorm_rows(int a, int gamma, int beta, T eps = T(1e-5)) {
    const Mat& x = val(a);
    const Eigen::Index d = x.cols();
    Vector<T> mean = x.rowwise().mean();
    Mat centered = x.array().colwise() - mean.array();
    Vector<T> inv_sigma =
        ((centered.array().square().rowwise().sum() / T(d)) + eps)
            .sqrt()
            .inverse();
    Mat xhat = centered.array().colwise() * inv_sigma.array();
    Mat y = (xhat.array().rowwise() * val(gamma).row(0).array()).rowwise() +
            val(beta).row(0).array();
    const int id = leaf(std::move(y));
    nodes_[id].back = [a, id, gamma, beta, d, xhat = std::move(xhat),
                       inv_sigma = std::move(inv_sigma)](Graph& g) {
      const Mat& G = g.grad(id);
      g.grad(beta).row(0) += G.colwise().sum();
      g.grad(gamma).row(0) += (G.array() * xhat.array()).colwise().sum().matrix();
      Mat gx = G.array().rowwise() * g.val(gamma).row(0).array();
      Vector<T> mg = gx.rowwise().mean();
      Vector<T> mgx = (gx.array() * xhat.array()).rowwise().mean();
      g.grad(a).array() +=
          (((gx.array().colwise() - mg.array()) -
            (xhat.array().colwise() * mgx.array())).colwise() *
           inv_sigma.array());
    };
    return id;
  }

  int slice_cols(int a, Eigen::Index c0, Eigen::Index nc) {
    return make(val(a).middleCols(c0, nc), [a, c0, nc](Graph& g, const Mat& G) {
      g.grad(a).middleCols(c0, nc) += G;
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    Eigen::Index cols = 0;
    for (int p : parts) cols += val(p).cols();
    Mat y(val(parts[0]).rows(), cols);
    Eigen::Index off = 0;
    for (int p : parts) {
      y.middleCols(off, val(p).cols()) = val(p);
      off += val(p).cols();
    }
    return make(std::move(y), [parts](Graph& g, const Mat& G) {
      Eigen::Index off = 0;
      for (int p : parts) {
        const Eigen::Index nc = g.val(p).cols();
        g.grad(p) += G.middleCols(off, nc);
        off += nc;
      }
    });
  }

  // 1-D convolution along rows (time), same padding with edge replication
  // so constant inputs stay constant through the stack. x: T x Cin,
  // w: (k*Cin) x Cout laid out tap-major, b: 1 x Cout.
  int conv1d(int x, int w, int b, int kernel, int stride) {
    const Mat& xv = val(x);
    const Eigen::Index t_in = xv.rows(), cin = xv.cols();
    const Eigen::Index t_out = (t_in + stride - 1) / stride;
    const Eigen::Index pad_total =
        std::max<Eigen::Index>((t_out - 1) * stride + kernel - t_in, 0);
    const Eigen::Index pad_left = pad_total / 2;
    auto tap = [&](Eigen::Index to, Eigen::Index u) {
      return std::clamp<Eigen::Index>(to * stride + u - pad_left, 0, t_in - 1);
    };
    Mat cols(t_out, kernel * cin);
    for (Eigen::Index to = 0; to < t_out; ++to)
      for (Eigen::Index u = 0; u < kernel; ++u)
        cols.block(to, u * cin, 1, cin) = xv.row(tap(to, u));
    Mat y = cols * val(w);
    y.rowwise() += val(b).row(0);
    const int id = leaf(std::move(y));
    nodes_[id].back = [x, w, b, id, kernel, stride, pad_left, t_in, cin,
                       cols = std::move(cols)](Graph& g) {
      const Mat& G = g.grad(id);
      g.grad(w) += cols.transpose() * G;
      g.grad(b).row(0) += G.colwise().sum();
      Mat gcols = G * g.val(w).transpose();
      Mat& gx = g.grad(x);
      for (Eigen::Index to = 0; to < gcols.rows(); ++to)
        for (Eigen::Index u = 0; u < kernel; ++u) {
          const Eigen::Index ti = std::clamp<Eigen::Index>(
              to * stride + u - pad_left, 0, t_in - 1);
          gx.row(ti) += gcols.block(to, u * cin, 1, cin);
        }
    };
    return id;
  }

  // Depthwise 1-D convolution, stride 1, same padding with edge
  // replication. w: k x C, b: 1 x C.
  int depthwise_conv1d(int x, int w, int b, int kernel) {
    const Mat& xv = val(x);
    const Eigen::Index t = xv.rows(), c = xv.cols();
    const Eigen::Index pad_left = (kernel - 1) / 2;
    Mat y = Mat::Zero(t, c);
    for (Eigen::Index to = 0; to < t; ++to)
      for (Eigen::Index u = 0; u < kernel; ++u) {
        const Eigen::Index ti = std::clamp<Eigen::Index>(to + u - pad_left,
                                                         0, t - 1);
        y.row(to).array() += xv.row(ti).array() * val(w).row(u).array();
      }
    y.rowwise() += val(b).row(0);
    const int id = leaf(std::move(y));
    nodes_[id].back = [x, w, b, id, kernel, pad_left, t](Graph& g) {
      const Mat& G = g.grad(id);
      g.grad(b).row(0) += G.colwise().sum();
      for (Eigen::Index to = 0; to < t; ++to)
        for (Eigen::Index u = 0; u < kernel; ++u) {
          const Eigen::Index ti = std::clamp<Eigen::Index>(to + u - pad_left,
                                                           0, t - 1);
          g.grad(w).row(u).array() +=
              G.row(to).array() * g.val(x).row(ti).array();
          g.grad(x).row(ti).array() +=
              G.row(to).array() * g.val(w).row(u).array();
        }
    };
    return id;
  }

  // Replace the given rows of x by a shared 1xD embedding.
  int replace_rows(int x, std::vector<int> rows, int embed) {
    Mat y = val(x);
    for (int r : rows) y.row(r) = val(embed).row(0);
    const int id = leaf(std::move(y));
    nodes_[id].back = [x, embed, id, rows = std::move(rows)](Graph& g) {
      Mat G = g.grad(id);
      for (int r : rows) {
        g.grad(embed).row(0) += G.row(r);
        G.row(r).setZero();
      }
      g.grad(x) += G;
    };
    return id;
  }

  int gather_rows(int x, std::vector<int> rows) {
    Mat y(static_cast<Eigen::Index>(rows.size()), val(x).cols());
    for (std::size_t p = 0; p < rows.size(); ++p) y.row(p) = val(x).row(rows[p]);
    const int id = leaf(std::move(y));
    nodes_[id].back = [x, id, rows = std::move(rows)](Graph& g) {
      for (std::size_t p = 0; p < rows.size(); ++p)
        g.grad(x).row(rows[p]) += g.grad(id).row(p);
    };
    return id;
  }

  // Adds a clipped relative-position bias to attention logits. table is
  // H x (2*max_offset+1); the bias for (i, j) depends only on j - i.
  int add_rel_bias(int scores, int table, int head, int max_offset) {
    const Mat& s = val(scores);
    const Eigen::Index t = s.rows();
    Mat y = s;
    for (Eigen::Index i = 0; i < t; ++i)
      for (Eigen::Index j = 0; j < t; ++j) {
        const auto off = std::clamp<Eigen::Index>(j - i, -max_offset, max_offset);
        y(i, j) += val(table)(head, off + max_offset);
      }
    const int id = leaf(std::move(y));
    nodes_[id].back = [scores, table, head, max_offset, id, t](Graph& g) {
      const Mat& G = g.grad(id);
      g.grad(scores) += G;
      for (Eigen::Index i = 0; i < t; ++i)
        for (Eigen::Index j = 0; j < t; ++j) {
          const auto off = std::clamp<Eigen::Index>(j - i, -max_offset, max_offset);
          g.grad(table)(head, off + max_offset) += G(i, j);
        }
    };
    return id;
  }

  // Row-wise L2 normalization; zero rows stay zero.
  int l2norm_rows(int a) {
    const Mat& x = val(a);
    Vector<T> norms = x.rowwise().norm();
    Mat y = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (norms[r] > T(0)) y.row(r) /= norms[r];
    const int id = leaf(std::move(y));
    nodes_[id].back = [a, id, norms = std::move(norms)](Graph& g) {
      const Mat& Y = g.val(id);
      const Mat& G = g.grad(id);
      for (Eigen::Index r = 0; r < Y.rows(); ++r) {
        if (norms[r] <= T(0)) continue;
        const T proj = G.row(r).dot(Y.row(r));
        g.grad(a).row(r) += (G.row(r) - proj * Y.row(r)) / norms[r];
      }
    };
    return id;
  }

  // InfoNCE over a precomputed similarity matrix. For each row i of sims,
  // candidates[i] lists candidate columns with the true target first; the
  // loss is the mean of -log softmax(sims(i, candidates[i]) / kappa)[0].
  int info_nce(int sims, std::vector<std::vector<int>> candidates, T kappa) {
    const Mat& s = val(sims);
    const auto p = static_cast<Eigen::Index>(candidates.size());
    Mat probs_store;  // per row: softmax over that row's candidate list
    std::size_t max_c = 0;
    for (const auto& c : candidates) max_c = std::max(max_c, c.size());
    probs_store = Mat::Zero(p, static_cast<Eigen::Index>(max_c));
    T loss = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto& cand = candidates[i];
      Vector<T> z(static_cast<Eigen::Index>(cand.size()));
      for (std::size_t j = 0; j < cand.size(); ++j)
        z[static_cast<Eigen::Index>(j)] = s(i, cand[j]) / kappa;
      const T m = z.maxCoeff();
      Vector<T> e = (z.array() - m).exp();
      // Accumulate in candidate-column order so the loss is independent of
      // how the candidate list happens to be permuted.
      std::vector<std::size_t> ord(cand.size());
      for (std::size_t j = 0; j < ord.size(); ++j) ord[j] = j;
      std::sort(ord.begin(), ord.end(),
                [&](std::size_t a, std::size_t b) { return cand[a] < cand[b]; });
      T denom = 0;
      for (std::size_t j : ord) denom += e[static_cast<Eigen::Index>(j)];
      loss += -(z[0] - m - std::log(denom));
      for (std::size_t j = 0; j < cand.size(); ++j)
        probs_store(i, static_cast<Eigen::Index>(j)) =
            e[static_cast<Eigen::Index>(j)] / denom;
    }
    Mat out(1, 1);
    out(0, 0) = loss / T(p);
    const int id = leaf(std::move(out));
    nodes_[id].back = [sims, id, kappa, p, candidates = std::move(candidates),
                       probs = std::move(probs_store)](Graph& g) {
      const T gout = g.grad(id)(0, 0);
      for (Eigen::Index i = 0; i < p; ++i) {
        const auto& cand = candidates[i];
        for (std::size_t j = 0; j < cand.size(); ++j) {
          const T pj = probs(i, static_cast<Eigen::Index>(j));
          const T ind = j == 0 ? T(1) : T(0);
          g.grad(sims)(i, cand[j]) += gout * (pj - ind) / (kappa * T(p));
        }
      }
    };
    return id;
  }

  // Runs reverse accumulation from a scalar root.
  void backward(int root) {
    if (val(root).rows() != 1 || val(root).cols() != 1)
      throw Error("backward: root must be scalar");
    for (int id = 0; id <= root; ++id)
      nodes_[id].grad = Mat::Zero(nodes_[id].val.rows(), nodes_[id].val.cols());
    nodes_[root].grad(0, 0) = T(1);
    for (int id = root; id >= 0; --id)
      if (nodes_[id].back) nodes_[id].back(*this);
  }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Graph&)> back;
  };

  int make(Mat v, std::function<void(Graph&, const Mat&)> back2) {
    const int id = leaf(std::move(v));
    if (back2)
      nodes_[id].back = [id, back2 = std::move(back2)](Graph& g) {
        back2(g, g.grad(id));
      };
    return id;
  }

  std::vector<Node> nodes_;
};

// Named parameter tensors with gradient and optimizer-moment storage.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix<T> value, grad, m, v;
  };

  int add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (find(name) >= 0) throw Error("duplicate parameter: " + name);
    Entry e;
    e.name = name;
    e.value = Matrix<T>::Zero(rows, cols);
    e.grad = Matrix<T>::Zero(rows, cols);
    e.m = Matrix<T>::Zero(rows, cols);
    e.v = Matrix<T>::Zero(rows, cols);
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
  }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  Entry& operator[](const std::string& name) {
    const int i = find(name);
    if (i < 0) throw Error("unknown parameter: " + name);
    return entries_[i];
  }
  const Entry& operator[](const std::string& name) const {
    const int i = find(name);
    if (i < 0) throw Error("unknown parameter: " + name);
    return entries_[i];
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads() {
    for (auto& e : entries_) e.grad.setZero();
  }

  // Tape handle for a named parameter.
  int node(Graph<T>& g, const std::string& name) {
    auto& e = (*this)[name];
    return g.param(e.value, &e.grad);
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace cap
