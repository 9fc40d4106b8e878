// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cap/audio.hpp"
#include "cap/common.hpp"

namespace cap {

struct MelConfig {
  int mel_bins = 80;
  int window_samples = 400;  // 25 ms at 16 kHz
  int hop_samples = 160;     // 10 ms -> 100 Hz frame rate
  int n_fft = 512;
  double fmin_hz = 20.0;
  double fmax_hz = 7600.0;
  double floor_epsilon = 1e-10;
};

struct MelSpectrogram {
  Matf frames;  // T x M
  double frame_period = 0.010;
};

// Triangular mel filterbank, rows = mel bins, cols = n_fft/2 + 1.
Matd mel_filterbank(const MelConfig& cfg);

// Number of frames for a clip of n samples; throws "clip too short".
int mel_num_frames(std::size_t n_samples, const MelConfig& cfg);

MelSpectrogram log_mel(const AudioClip& clip, const MelConfig& cfg = {});

// Autocorrelation pitch tracker over 40 ms hops; returns (time_s, f0_hz)
// estimates for voiced frames. Used by corpus checks, not the model path.
std::vector<std::pair<double, double>> track_pitch(
    const std::vector<float>& samples, int sample_rate);

}  // namespace cap
