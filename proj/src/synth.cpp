// SPDX-License-Identifier: Apache-2.0
#include "cap/synth.hpp"

#include <cmath>

namespace cap {

const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::kSpeaker: return "speaker";
    case TaskKind::kProsody: return "prosody";
    default: return "spoof";
  }
}

TaskKind task_kind_from_name(const std::string& s) {
  if (s == "speaker") return TaskKind::kSpeaker;
  if (s == "prosody") return TaskKind::kProsody;
  if (s == "spoof") return TaskKind::kSpoof;
  throw Error("unknown task kind: " + s);
}

MetricKind metric_for_kind(TaskKind k) {
  switch (k) {
    case TaskKind::kSpeaker: return MetricKind::kAccuracy;
    case TaskKind::kProsody: return MetricKind::kUar;
    default: return MetricKind::kEer;
  }
}

const char* metric_kind_name(MetricKind m) {
  switch (m) {
    case MetricKind::kAccuracy: return "accuracy";
    case MetricKind::kUar: return "uar";
    default: return "eer";
  }
}

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

// Harmonic amplitude from a two-formant resonance profile.
double formant_weight(double freq_hz, double f1, double f2) {
  auto bump = [](double f, double center, double bw) {
    const double d = (f - center) / bw;
    return std::exp(-0.5 * d * d);
  };
  return bump(freq_hz, f1, 180.0) + 0.6 * bump(freq_hz, f2, 280.0) + 0.03;
}

// Additive harmonic source with a time-varying fundamental contour.
// contour(t) returns f0 in Hz; amp(t) scales the waveform.
template <typename F0Fn, typename AmpFn>
std::vector<float> render_harmonics(std::size_t n, F0Fn&& f0_at,
                                    AmpFn&& amp_at, double f1, double f2,
                                    double noise_level, Rng& rng) {
  std::vector<float> out(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double f0 = f0_at(t);
    phase += kTwoPi * f0 / kSampleRate;
    double s = 0.0;
    const int n_harm = std::min(12, static_cast<int>(4000.0 / f0));
    for (int h = 1; h <= n_harm; ++h)
      s += formant_weight(h * f0, f1, f2) * std::sin(h * phase);
    s = 0.25 * s * amp_at(t) + noise_level * gaussian(rng);
    out[i] = static_cast<float>(std::clamp(s, -1.0, 1.0));
  }
  return out;
}

std::vector<float> render_speaker_clip(int cls, double duration_s, Rng& rng) {
  // The static spectrum is nearly pure nuisance: the class grids for
  // pitch and formants are much narrower than the per-clip scatter, so
  // averaging the spectrum over time says little about identity. What
  // separates classes is delivery dynamics, the vibrato and tremolo rate
  // grids below, which only show up in how the signal moves frame to
  // frame.
  const double f0_base = 120.0 * std::pow(2.0, cls / 48.0);
  const double jitter = uniform(rng, -0.08, 0.08);
  const double f0_clip = f0_base * (1.0 + jitter);
  const double f1 = 480.0 + 50.0 * (cls % 4) + uniform(rng, -100.0, 100.0);
  const double f2 =
      1600.0 + 120.0 * ((cls / 4) % 4) + uniform(rng, -250.0, 250.0);
  const double gain = uniform(rng, 0.35, 1.0);
  // Noticeable per-clip noise floor: the harmonic structure stays
  // predictable from context while the noise does not, so masked
  // prediction rewards features that keep the tonal content.
  const double noise_level = uniform(rng, 0.10, 0.30);
  // Class-dependent delivery signature: vibrato and tremolo rates are part
  // of the voice profile. These cues live in the frame-to-frame dynamics,
  // not in the time-averaged spectrum, so they reward features that track
  // local change.
  const double vib_rate = 3.0 + 3.0 * (cls % 4) + uniform(rng, -0.5, 0.5);
  const double vib_depth = uniform(rng, 0.020, 0.040);
  const double vib_phase = uniform(rng, 0.0, kTwoPi);
  // Slow random pitch drift so features vary across the clip.
  const double drift_rate = uniform(rng, 0.3, 1.2);
  const double drift_depth = uniform(rng, 0.02, 0.06);
  const double drift_phase = uniform(rng, 0.0, kTwoPi);
  const double am_rate = 1.0 + 2.0 * ((cls / 4) % 4) + uniform(rng, -0.3, 0.3);
  const double am_phase = uniform(rng, 0.0, kTwoPi);
  const auto n = static_cast<std::size_t>(duration_s * kSampleRate);
  auto out = render_harmonics(
      n,
      [=](double t) {
        return f0_clip *
               (1.0 + drift_depth * std::sin(kTwoPi * drift_rate * t + drift_phase)) *
               (1.0 + vib_depth * std::sin(kTwoPi * vib_rate * t + vib_phase));
      },
      [=](double t) {
        return gain * (0.7 + 0.3 * std::sin(kTwoPi * am_rate * t + am_phase));
      },
      f1, f2, noise_level, rng);
  return out;
}

std::vector<float> render_prosody_clip(int cls, int num_classes,
                                       double duration_s, Rng& rng) {
  // Class determines the pitch-contour slope in octaves/second, centered
  // so the middle class is flat: rising / flat / falling for 3 classes.
  const double slope_oct_s = 0.45 * (cls - (num_classes - 1) / 2.0);
  const double f0_base = uniform(rng, 140.0, 200.0);
  const double am_rate = uniform(rng, 2.0, 5.0);
  const auto n = static_cast<std::size_t>(duration_s * kSampleRate);
  return render_harmonics(
      n,
      [=](double t) { return f0_base * std::pow(2.0, slope_oct_s * t); },
      [=](double t) { return 0.8 + 0.2 * std::sin(kTwoPi * am_rate * t); },
      500.0, 1600.0, 0.008, rng);
}

std::vector<float> render_spoof_clip(bool bonafide, double duration_s,
                                     Rng& rng) {
  const double f0 = uniform(rng, 110.0, 180.0);
  const auto n = static_cast<std::size_t>(duration_s * kSampleRate);
  if (!bonafide) {
    // Perfectly periodic: constant fundamental, constant amplitude.
    return render_harmonics(
        n, [=](double) { return f0; }, [](double) { return 1.0; }, 480.0,
        1550.0, 0.0, rng);
  }
  // Jittered harmonic source: cycle-level frequency jitter plus shimmer.
  const double jitter_rate = uniform(rng, 20.0, 40.0);
  const double jitter_depth = uniform(rng, 0.01, 0.03);
  const double shimmer_rate = uniform(rng, 15.0, 30.0);
  const double jp = uniform(rng, 0.0, kTwoPi);
  const double sp = uniform(rng, 0.0, kTwoPi);
  return render_harmonics(
      n,
      [=](double t) {
        return f0 * (1.0 + jitter_depth * std::sin(kTwoPi * jitter_rate * t + jp));
      },
      [=](double t) { return 0.9 + 0.1 * std::sin(kTwoPi * shimmer_rate * t + sp); },
      480.0, 1550.0, 0.004, rng);
}

std::string class_label(const SyntheticTaskSpec& spec, int cls) {
  if (spec.kind == TaskKind::kSpoof) return cls == 0 ? "bonafide" : "spoof";
  return std::string(task_kind_name(spec.kind)) + "_" + std::to_string(cls);
}

}  // namespace

std::vector<AudioClip> synthesize_corpus(const SyntheticTaskSpec& spec) {
  if (spec.num_classes <= 0) throw Error("synthesize_corpus: zero classes");
  int total_per_split = 0;
  for (int c : spec.clips_per_class) total_per_split += c;
  if (total_per_split <= 0) throw Error("synthesize_corpus: zero clips");
  if (spec.kind == TaskKind::kSpoof && spec.num_classes != 2)
    throw Error("spoof task is binary");
  if (!spec.class_proportions.empty() &&
      static_cast<int>(spec.class_proportions.size()) != spec.num_classes)
    throw Error("class_proportions size must equal num_classes");

  // Per-class per-split quotas.
  std::vector<std::array<int, 3>> quota(spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < 3; ++s) {
      if (spec.class_proportions.empty()) {
        quota[c][s] = spec.clips_per_class[s];
      } else {
        double wsum = 0;
        for (double w : spec.class_proportions) wsum += w;
        const int total = spec.clips_per_class[s] * spec.num_classes;
        quota[c][s] = std::max(
            1, static_cast<int>(std::lround(total * spec.class_proportions[c] / wsum)));
      }
    }
  }

  std::vector<AudioClip> clips;
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    std::array<int, 3> filled = {0, 0, 0};
    // Candidate ids are consumed in order; the hash of the id decides the
    // split, so regenerating a corpus never moves a clip across splits.
    for (int idx = 0; filled != quota[cls]; ++idx) {
      if (idx > 400 * (quota[cls][0] + quota[cls][1] + quota[cls][2] + 1))
        throw Error("split hashing failed to fill quotas (task " +
                    spec.task_id + ")");
      const std::string clip_id = spec.task_id + "/" + class_label(spec, cls) +
                                  "/" + std::to_string(idx);
      const Split split = split_for_clip(clip_id);
      const int si = static_cast<int>(split);
      if (filled[si] >= quota[cls][si]) continue;
      ++filled[si];

      Rng rng(spec.seed ^ fnv1a64(clip_id));
      const double dur = uniform(rng, spec.min_duration_s, spec.max_duration_s);
      AudioClip clip;
      clip.clip_id = clip_id;
      clip.task_id = spec.task_id;
      clip.label = class_label(spec, cls);
      clip.split = split;
      switch (spec.kind) {
        case TaskKind::kSpeaker:
          clip.samples = render_speaker_clip(cls, dur, rng);
          break;
        case TaskKind::kProsody:
          clip.samples = render_prosody_clip(cls, spec.num_classes, dur, rng);
          break;
        case TaskKind::kSpoof:
          clip.samples = render_spoof_clip(cls == 0, dur, rng);
          break;
      }
      validate_clip(clip);
      clips.push_back(std::move(clip));
    }
  }
  return clips;
}

}  // namespace cap
