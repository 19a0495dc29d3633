#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ptsd {

// Everything in the pipeline (labels, prompts, posteriors) lives on a fixed
// 25 frames/s grid; audio is 16 kHz mono throughout.
constexpr int FRAME_RATE = 25;
constexpr int SAMPLE_RATE = 16000;
constexpr int SAMPLES_PER_FRAME = SAMPLE_RATE / FRAME_RATE;  // 640

// Bad inputs (malformed annotations, out-of-domain flags). CLI maps this to
// exit code 2; plain std::runtime_error maps to 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// floor(t * 25), with a one-ulp guard so exact boundaries like t = 1.00
// land on the frame they name.
inline int time_to_frame(double seconds) {
  if (seconds < 0.0) throw ValidationError("time_to_frame: negative time");
  return static_cast<int>(std::floor(seconds * FRAME_RATE + 1e-9));
}

// Frame center in seconds: (i + 0.5) / 25.
inline double frame_to_time(int frame) {
  return (static_cast<double>(frame) + 0.5) / FRAME_RATE;
}

// Quantize to the 1 ms grid used by RTTM output.
inline double quantize_ms(double t) { return std::round(t * 1000.0) / 1000.0; }

// T = ceil(duration * 25). The epsilon keeps durations that are an exact
// multiple of 0.04 s from spilling into an extra frame.
inline int frames_for_duration(double seconds) {
  if (seconds < 0.0) throw ValidationError("frames_for_duration: negative duration");
  return static_cast<int>(std::ceil(seconds * FRAME_RATE - 1e-9));
}

}  // namespace ptsd
