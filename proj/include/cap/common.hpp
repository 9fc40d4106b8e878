// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cap {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
using Matf = Matrix<float>;
using Matd = Matrix<double>;

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
using Vecf = Vector<float>;
using Vecd = Vector<double>;

constexpr int kSampleRate = 16000;

enum class Split { kTrain, kDev, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    default: return "test";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + s);
}

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// 64-bit FNV-1a, used for split assignment and config fingerprints.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

// Split assignment is a pure function of clip_id (80/10/10).
inline Split split_for_clip(const std::string& clip_id) {
  const std::uint64_t h = fnv1a64(clip_id) % 10;
  if (h < 8) return Split::kTrain;
  if (h == 8) return Split::kDev;
  return Split::kTest;
}

using Rng = std::mt19937_64;

// Uniform real in [0, 1); implementation-pinned so corpora are stable
// regardless of libstdc++ distribution details.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  // Rejection-free modulo is fine here; n is tiny relative to 2^64.
  return rng() % n;
}

inline double gaussian(Rng& rng) {
  // Box-Muller, two uniforms per call; deterministic across platforms.
  const double u1 = std::max(uniform01(rng), 1e-300);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace cap
