// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "cap/audio.hpp"

namespace cap {

enum class TaskKind { kSpeaker, kProsody, kSpoof };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& s);

// Metric used when probing a task of this kind.
enum class MetricKind { kAccuracy, kUar, kEer };
MetricKind metric_for_kind(TaskKind k);
const char* metric_kind_name(MetricKind m);

struct SyntheticTaskSpec {
  std::string task_id;
  TaskKind kind = TaskKind::kSpeaker;
  int num_classes = 4;
  // Requested clips per class for train/dev/test.
  std::array<int, 3> clips_per_class = {40, 10, 10};
  // Optional relative class proportions; empty means balanced. When set,
  // the per-split total (clips_per_class * num_classes) is distributed
  // according to these weights.
  std::vector<double> class_proportions;
  double min_duration_s = 1.0;
  double max_duration_s = 2.0;
  std::uint64_t seed = 0;
};

// Deterministic: same spec + seed gives a byte-identical corpus. Split
// assignment is a pure function of clip_id.
std::vector<AudioClip> synthesize_corpus(const SyntheticTaskSpec& spec);

}  // namespace cap
