// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cap/common.hpp"

namespace cap {

struct AudioClip {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;
  std::string clip_id;
  std::string label;
  Split split = Split::kTrain;
  std::string task_id;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

void validate_clip(const AudioClip& clip);

// RIFF 16-bit PCM mono.
std::vector<float> read_wav(const std::string& path, int* sample_rate_out);
void write_wav(const std::string& path, const std::vector<float>& samples,
               int sample_rate);

// Linear-interpolation resampler.
std::vector<float> resample(const std::vector<float>& in, int rate_in,
                            int rate_out);

struct IngestOptions {
  bool skip_bad = false;
  std::string task_id = "ingested";
};

// Layout: <root>/<split>/<label>/<file>.wav
std::vector<AudioClip> ingest_wav_dir(const std::string& root,
                                      const IngestOptions& opts);

// JSONL manifest: {clip_id, task_id, label, split, duration_s} per line.
void write_manifest(const std::string& path,
                    const std::vector<AudioClip>& clips);

}  // namespace cap
