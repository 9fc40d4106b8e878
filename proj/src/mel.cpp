// SPDX-License-Identifier: Apache-2.0
#include "cap/mel.hpp"

#include <cmath>
#include <complex>
#include <vector>

namespace cap {

namespace {

// Iterative radix-2 complex FFT, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

}  // namespace

Matd mel_filterbank(const MelConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> centers(cfg.mel_bins + 2);
  for (int i = 0; i < cfg.mel_bins + 2; ++i)
    centers[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.mel_bins + 1));

  Matd fb = Matd::Zero(cfg.mel_bins, n_bins);
  for (int m = 0; m < cfg.mel_bins; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / cfg.n_fft;
      if (f <= lo || f >= hi) continue;
      fb(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

int mel_num_frames(std::size_t n_samples, const MelConfig& cfg) {
  if (n_samples < static_cast<std::size_t>(cfg.window_samples))
    throw Error("clip too short");
  return static_cast<int>((n_samples - cfg.window_samples) / cfg.hop_samples) + 1;
}

MelSpectrogram log_mel(const AudioClip& clip, const MelConfig& cfg) {
  const int T = mel_num_frames(clip.samples.size(), cfg);
  const Matd fb = mel_filterbank(cfg);
  const int n_bins = cfg.n_fft / 2 + 1;

  std::vector<double> window(cfg.window_samples);
  for (int i = 0; i < cfg.window_samples; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (cfg.window_samples - 1));

  MelSpectrogram mel;
  mel.frames.resize(T, cfg.mel_bins);
  std::vector<std::complex<double>> buf(cfg.n_fft);
  Vecd power(n_bins);
  for (int t = 0; t < T; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * cfg.hop_samples;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const double s =
          i < cfg.window_samples ? clip.samples[off + i] * window[i] : 0.0;
      buf[i] = {s, 0.0};
    }
    fft_inplace(buf);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
    const Vecd mel_power = fb * power;
    for (int m = 0; m < cfg.mel_bins; ++m)
      mel.frames(t, m) =
          static_cast<float>(std::log(mel_power[m] + cfg.floor_epsilon));
  }
  return mel;
}

std::vector<std::pair<double, double>> track_pitch(
    const std::vector<float>& samples, int sample_rate) {
  const int win = sample_rate / 20;  // 50 ms analysis window
  const int hop = sample_rate / 25;
  const int lag_min = sample_rate / 400;  // 400 Hz ceiling
  const int lag_max = sample_rate / 70;   // 70 Hz floor
  std::vector<std::pair<double, double>> f0;
  for (std::size_t off = 0; off + win + lag_max < samples.size(); off += hop) {
    double e0 = 0.0;
    for (int i = 0; i < win; ++i) e0 += double(samples[off + i]) * samples[off + i];
    if (e0 < 1e-6) continue;
    double best = 0.0;
    int best_lag = 0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      double r = 0.0, e1 = 0.0;
      for (int i = 0; i < win; ++i) {
        r += double(samples[off + i]) * samples[off + i + lag];
        e1 += double(samples[off + i + lag]) * samples[off + i + lag];
      }
      const double score = r / std::sqrt(e0 * e1 + 1e-12);
      if (score > best) {
        best = score;
        best_lag = lag;
      }
    }
    if (best > 0.5 && best_lag > 0)
      f0.emplace_back(static_cast<double>(off) / sample_rate,
                      static_cast<double>(sample_rate) / best_lag);
  }
  return f0;
}

}  // namespace cap
