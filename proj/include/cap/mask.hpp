// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "cap/common.hpp"

namespace cap {

struct MaskPlan {
  std::vector<int> masked;       // sorted unique frame indices
  std::vector<int> span_starts;  // surviving span starts
  int span_length = 0;
  double start_prob = 0.0;

  double masked_fraction(int t_frames) const {
    return static_cast<double>(masked.size()) / t_frames;
  }
};

// Each frame starts a span of `span` frames with probability `start_prob`;
// overlapping spans are unioned and spans are truncated at the clip edge.
// If the union exceeds the cap, the latest span starts are dropped until it
// fits; a single span that cannot fit rejects the configuration. An empty
// draw is resampled once, then one span is forced at a random start.
MaskPlan sample_mask(int t_frames, double start_prob, int span, Rng& rng,
                     double cap = 0.75);

}  // namespace cap
