#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ptsd/audio.hpp"
#include "ptsd/common.hpp"
#include "ptsd/dsp.hpp"
#include "ptsd/mat.hpp"

namespace ptsd {

enum class FrontendKind { logmel, external_adapter };

inline const char* to_string(FrontendKind k) {
  return k == FrontendKind::logmel ? "logmel" : "external-adapter";
}

inline FrontendKind frontend_kind_from_string(const std::string& s) {
  if (s == "logmel") return FrontendKind::logmel;
  if (s == "external-adapter") return FrontendKind::external_adapter;
  throw ValidationError("unknown frontend kind: '" + s + "'");
}

// Window = hop = 0.04 s so the 25/s grid is exact and label, prompt and
// posterior indexing all coincide.
struct FrontendConfig {
  FrontendKind kind = FrontendKind::logmel;
  int n_mels = 40;
  int n_fft = 1024;
  double fmin = 0.0;
  double fmax = 8000.0;
  int d_model = 256;
  double log_floor = 1e-10;
  std::string adapter_name;  // external-adapter only

  // Width of the raw (pre-projection) features the trainable linear map sees.
  int raw_width() const { return kind == FrontendKind::logmel ? n_mels : d_model; }
};

// Frame-level feature sequence at 25/s.
template <typename Real>
struct FeatureSequence {
  std::string clip_id;
  int frame_rate = FRAME_RATE;
  Mat<Real> frames;  // T x D
};

// Registry for external feature extractors. A registered adapter must return
// T x width at 25 frames/s; the shape is validated at call time.
template <typename Real>
class AdapterRegistry {
 public:
  using Fn = std::function<Mat<Real>(const AudioClip&)>;

  static AdapterRegistry& instance() {
    static AdapterRegistry reg;
    return reg;
  }

  void register_adapter(const std::string& name, Fn fn) { fns_[name] = std::move(fn); }

  const Fn& get(const std::string& name) const {
    auto it = fns_.find(name);
    if (it == fns_.end()) throw ValidationError("no registered frontend adapter named '" + name + "'");
    return it->second;
  }

 private:
  std::map<std::string, Fn> fns_;
};

// Raw per-frame features before the trainable projection: log mel energies
// (floor applied before log) for the logmel kind, or the adapter's output.
template <typename Real>
Mat<Real> raw_frontend_features(const AudioClip& audio, const FrontendConfig& cfg) {
  const int T = frames_for_duration(audio.duration());
  if (cfg.kind == FrontendKind::external_adapter) {
    Mat<Real> out = AdapterRegistry<Real>::instance().get(cfg.adapter_name)(audio);
    if (out.rows() != T || out.cols() != cfg.raw_width())
      throw std::runtime_error("frontend adapter shape mismatch: expected " + std::to_string(T) +
                               "x" + std::to_string(cfg.raw_width()) + ", got " +
                               std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
    if (!out.allFinite()) throw std::runtime_error("frontend adapter produced non-finite values");
    return out;
  }

  static thread_local std::map<std::pair<int, int>, MelFilterbank> bank_cache;
  auto key = std::make_pair(cfg.n_mels, cfg.n_fft);
  auto it = bank_cache.find(key);
  if (it == bank_cache.end())
    it = bank_cache.emplace(key, MelFilterbank(cfg.n_mels, cfg.n_fft, cfg.fmin, cfg.fmax, SAMPLE_RATE))
             .first;
  const MelFilterbank& bank = it->second;

  const std::vector<double> window = hann_window(SAMPLES_PER_FRAME);
  Mat<Real> out(T, cfg.n_mels);
  std::vector<double> frame(SAMPLES_PER_FRAME);
  for (int t = 0; t < T; ++t) {
    const size_t start = static_cast<size_t>(t) * SAMPLES_PER_FRAME;
    for (int i = 0; i < SAMPLES_PER_FRAME; ++i) {
      const size_t idx = start + i;
      frame[i] = idx < audio.samples.size() ? audio.samples[idx] * window[i] : 0.0;
    }
    const auto power = power_spectrum(frame.data(), SAMPLES_PER_FRAME, cfg.n_fft);
    const auto mel = bank.apply(power);
    for (int m = 0; m < cfg.n_mels; ++m)
      out(t, m) = static_cast<Real>(std::log(std::max(mel[m], cfg.log_floor)));
  }
  return out;
}

}  // namespace ptsd
