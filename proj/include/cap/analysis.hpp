// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cap/common.hpp"

namespace cap {

// Linear CKA between two representations over the same N examples:
// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) on column-centered matrices.
// Returns 0 when either norm vanishes.
double linear_cka(const Matd& x, const Matd& y);

struct CkaMatrix {
  std::string model_a, model_b;
  Matd grid;  // L_A x L_B, values in [0, 1]
  int sample_size = 0;

  void save_csv(const std::string& path) const;
};

// acts[l] is the N x D matrix of clip-level layer-l embeddings over a
// shared clip sample. Pass the same stack twice for the within-model grid.
CkaMatrix cka_grid(const std::vector<Matd>& acts_a,
                   const std::vector<Matd>& acts_b,
                   const std::string& model_a, const std::string& model_b);

// Attention-probability-weighted mean |i - j| per head, in seconds:
// (1/T') sum_ij A[i,j] |i-j| * frame_period. Rows must sum to 1 +- 1e-4.
Vecd mean_attention_distance(const std::vector<Matd>& heads,
                             double frame_period);

struct AttnDistanceProfile {
  // profile(l, h) = mean distance in seconds averaged over the clip sample.
  Matd per_head;     // L x H
  Vecd per_layer_min;  // shortest attention head per layer

  void save_csv(const std::string& path, const std::string& model) const;
};

struct LayerCurve {
  std::string model;
  std::vector<double> positions;  // layer / L
  std::vector<double> scores;
  int plateau_begin = 0, plateau_end = 0;  // layer indices, inclusive
};

// Normalized-position score curve plus the maximal contiguous layer range
// within `tolerance` (relative) of the peak score.
LayerCurve layer_curve(const std::string& model,
                       const std::vector<double>& scores,
                       double tolerance = 0.02);

}  // namespace cap
