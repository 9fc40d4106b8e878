// SPDX-License-Identifier: Apache-2.0
#include "cap/mask.hpp"

#include <algorithm>

namespace cap {

namespace {

std::vector<int> union_of_spans(const std::vector<int>& starts, int span,
                                int t_frames) {
  std::vector<bool> covered(t_frames, false);
  for (int s : starts)
    for (int i = s; i < std::min(s + span, t_frames); ++i) covered[i] = true;
  std::vector<int> out;
  for (int i = 0; i < t_frames; ++i)
    if (covered[i]) out.push_back(i);
  return out;
}

std::vector<int> draw_starts(int t_frames, double p, Rng& rng) {
  std::vector<int> starts;
  for (int i = 0; i < t_frames; ++i)
    if (uniform01(rng) < p) starts.push_back(i);
  return starts;
}

}  // namespace

MaskPlan sample_mask(int t_frames, double start_prob, int span, Rng& rng,
                     double cap) {
  if (t_frames <= 0 || span <= 0) throw Error("sample_mask: bad sizes");
  if (static_cast<double>(std::min(span, t_frames)) / t_frames > cap)
    throw Error("mask plan exceeds cap");
  if (t_frames <= span) throw Error("sample_mask: requires T' > span");

  std::vector<int> starts = draw_starts(t_frames, start_prob, rng);
  if (starts.empty()) starts = draw_starts(t_frames, start_prob, rng);
  if (starts.empty())
    starts.push_back(static_cast<int>(uniform_index(rng, t_frames - span + 1)));

  std::vector<int> masked = union_of_spans(starts, span, t_frames);
  while (static_cast<double>(masked.size()) / t_frames > cap &&
         starts.size() > 1) {
    starts.pop_back();
    masked = union_of_spans(starts, span, t_frames);
  }
  if (static_cast<double>(masked.size()) / t_frames > cap)
    throw Error("mask plan exceeds cap");

  MaskPlan plan;
  plan.masked = std::move(masked);
  plan.span_starts = std::move(starts);
  plan.span_length = span;
  plan.start_prob = start_prob;
  return plan;
}

}  // namespace cap
