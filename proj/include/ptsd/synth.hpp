#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ptsd/audio.hpp"
#include "ptsd/dsp.hpp"
#include "ptsd/rng.hpp"
#include "ptsd/types.hpp"

namespace ptsd {

// Synthetic speakers: a harmonic source at a per-speaker fundamental, shaped
// by a per-speaker formant envelope. Crude, but loud, distinct and cheap,
// which is all the simulator needs.

constexpr double FEMALE_F0_MIN = 165.0, FEMALE_F0_MAX = 255.0;
constexpr double MALE_F0_MIN = 85.0, MALE_F0_MAX = 155.0;

inline SpeakerProfile synth_speaker(uint64_t seed, Gender gender) {
  Rng rng = Rng::substream(seed, 0x5eedULL);
  SpeakerProfile p;
  p.gender = gender;
  p.speaker_id = "spk" + std::to_string(seed);
  if (gender == Gender::female)
    p.f0_base_hz = rng.uniform(FEMALE_F0_MIN, FEMALE_F0_MAX);
  else
    p.f0_base_hz = rng.uniform(MALE_F0_MIN, MALE_F0_MAX);
  // Three formant-like resonances with per-speaker placement and gain.
  const double centers[3] = {500.0, 1500.0, 2600.0};
  for (int i = 0; i < 3; ++i) {
    p.formant_hz.push_back(centers[i] * rng.uniform(0.8, 1.25));
    p.formant_gain.push_back(rng.uniform(0.5, 1.5));
  }
  return p;
}

// Lorentzian spectral envelope evaluated at frequency f.
inline double formant_envelope(const SpeakerProfile& p, double f) {
  double v = 0.05;
  for (size_t i = 0; i < p.formant_hz.size(); ++i) {
    const double bw = 120.0 + 40.0 * static_cast<double>(i);
    const double x = (f - p.formant_hz[i]) / bw;
    v += p.formant_gain[i] / (1.0 + x * x);
  }
  return v;
}

// Harmonic additive synthesis with slow f0 jitter plus low-level noise,
// RMS-normalized. Length is exactly round(duration * 16000) samples.
inline AudioClip synth_utterance(const SpeakerProfile& profile, double duration, Rng& rng,
                                 double target_rms = 0.1) {
  if (duration <= 0.0) throw ValidationError("synth_utterance: duration must be positive");
  const long n = std::lround(duration * SAMPLE_RATE);
  AudioClip clip;
  clip.samples.assign(n, 0.0);

  const double jitter_rate = rng.uniform(2.0, 5.0);   // Hz
  const double jitter_depth = rng.uniform(0.01, 0.03);
  const double jitter_phase = rng.uniform(0.0, 2.0 * PI);

  const int n_harm =
      std::min(48, static_cast<int>(std::floor(7800.0 / profile.f0_base_hz)));
  std::vector<double> amp(n_harm), phase_inc_scale(n_harm), phase(n_harm);
  for (int k = 0; k < n_harm; ++k) {
    const double f = profile.f0_base_hz * (k + 1);
    amp[k] = formant_envelope(profile, f) / (k + 1);
    phase[k] = rng.uniform(0.0, 2.0 * PI);
  }

  double t = 0.0;
  const double dt = 1.0 / SAMPLE_RATE;
  for (long i = 0; i < n; ++i, t += dt) {
    const double f0 = profile.f0_base_hz *
                      (1.0 + jitter_depth * std::sin(2.0 * PI * jitter_rate * t + jitter_phase));
    double s = 0.0;
    for (int k = 0; k < n_harm; ++k) {
      phase[k] += 2.0 * PI * f0 * (k + 1) * dt;
      s += amp[k] * std::sin(phase[k]);
    }
    // Slow amplitude modulation so utterances are not wall-to-wall flat.
    const double env = 0.8 + 0.2 * std::sin(2.0 * PI * 1.7 * t + jitter_phase);
    clip.samples[i] = s * env + 0.01 * rng.normal();
  }

  const double r = clip.rms();
  if (r > 0.0) {
    const double g = target_rms / r;
    for (auto& s : clip.samples) s *= g;
  }
  return clip;
}

}  // namespace ptsd
