// SPDX-License-Identifier: Apache-2.0
#include "cap/analysis.hpp"

#include <cmath>
#include <fstream>

namespace cap {

double linear_cka(const Matd& x, const Matd& y) {
  if (x.rows() != y.rows()) throw Error("linear_cka: N mismatch");
  if (x.rows() < 2) throw Error("linear_cka: need N >= 2");
  const Matd xc = x.rowwise() - x.colwise().mean();
  const Matd yc = y.rowwise() - y.colwise().mean();
  const double cross = (yc.transpose() * xc).squaredNorm();
  const double nx = (xc.transpose() * xc).norm();
  const double ny = (yc.transpose() * yc).norm();
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return cross / (nx * ny);
}

void CkaMatrix::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write cka grid: " + path);
  out << "# model_a=" << model_a << " model_b=" << model_b
      << " sample_size=" << sample_size << "\n";
  out << "layer_a\\layer_b";
  for (Eigen::Index j = 0; j < grid.cols(); ++j) out << "," << j;
  out << "\n";
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < grid.cols(); ++j) out << "," << grid(i, j);
    out << "\n";
  }
}

CkaMatrix cka_grid(const std::vector<Matd>& acts_a,
                   const std::vector<Matd>& acts_b,
                   const std::string& model_a, const std::string& model_b) {
  if (acts_a.empty() || acts_b.empty()) throw Error("cka_grid: empty layer set");
  CkaMatrix out;
  out.model_a = model_a;
  out.model_b = model_b;
  out.sample_size = static_cast<int>(acts_a[0].rows());
  out.grid.resize(static_cast<Eigen::Index>(acts_a.size()),
                  static_cast<Eigen::Index>(acts_b.size()));
  for (std::size_t i = 0; i < acts_a.size(); ++i)
    for (std::size_t j = 0; j < acts_b.size(); ++j)
      out.grid(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          linear_cka(acts_a[i], acts_b[j]);
  return out;
}

Vecd mean_attention_distance(const std::vector<Matd>& heads,
                             double frame_period) {
  Vecd out(static_cast<Eigen::Index>(heads.size()));
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const Matd& a = heads[h];
    const Eigen::Index t = a.rows();
    for (Eigen::Index i = 0; i < t; ++i)
      if (std::abs(a.row(i).sum() - 1.0) > 1e-4)
        throw Error("attention row not normalized");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t; ++i)
      for (Eigen::Index j = 0; j < t; ++j)
        acc += a(i, j) * std::abs(static_cast<double>(i - j));
    out[static_cast<Eigen::Index>(h)] = acc / t * frame_period;
  }
  return out;
}

void AttnDistanceProfile::save_csv(const std::string& path,
                                   const std::string& model) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write attention profile: " + path);
  out << "# model=" << model << " units=seconds\n";
  out << "layer,min_distance";
  for (Eigen::Index h = 0; h < per_head.cols(); ++h) out << ",head" << h;
  out << "\n";
  for (Eigen::Index l = 0; l < per_head.rows(); ++l) {
    out << (l + 1) << "," << per_layer_min[l];
    for (Eigen::Index h = 0; h < per_head.cols(); ++h)
      out << "," << per_head(l, h);
    out << "\n";
  }
}

LayerCurve layer_curve(const std::string& model,
                       const std::vector<double>& scores, double tolerance) {
  if (scores.empty()) throw Error("layer_curve: no scores");
  LayerCurve curve;
  curve.model = model;
  const auto n = scores.size();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  double peak = scores[0];
  for (double s : scores) peak = std::max(peak, s);
  const double cutoff = peak * (1.0 - tolerance);

  int best_begin = 0, best_end = 0, cur_begin = -1;
  for (std::size_t i = 0; i <= n; ++i) {
    const bool in = i < n && scores[i] >= cutoff;
    if (in && cur_begin < 0) cur_begin = static_cast<int>(i);
    if (!in && cur_begin >= 0) {
      const int end = static_cast<int>(i) - 1;
      if (end - cur_begin > best_end - best_begin) {
        best_begin = cur_begin;
        best_end = end;
      }
      cur_begin = -1;
    }
  }
  curve.plateau_begin = best_begin;
  curve.plateau_end = best_end;
  for (std::size_t i = 0; i < n; ++i) {
    curve.positions.push_back(static_cast<double>(i) / denom);
    curve.scores.push_back(scores[i]);
  }
  return curve;
}

}  // namespace cap
