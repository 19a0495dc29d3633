#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "ptsd/common.hpp"
#include "ptsd/types.hpp"

namespace ptsd {

constexpr double PI = 3.14159265358979323846;

// Iterative radix-2 FFT, in place. n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::runtime_error("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Power spectrum of a real frame zero-padded to n_fft; returns n_fft/2 + 1 bins.
inline std::vector<double> power_spectrum(const double* frame, int frame_len, int n_fft) {
  std::vector<std::complex<double>> buf(n_fft, {0.0, 0.0});
  for (int i = 0; i < frame_len; ++i) buf[i] = {frame[i], 0.0};
  fft_inplace(buf);
  std::vector<double> out(n_fft / 2 + 1);
  for (int k = 0; k <= n_fft / 2; ++k) out[k] = std::norm(buf[k]);
  return out;
}

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * PI * i / (n - 1));
  return w;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank over FFT bins; rows are filters.
struct MelFilterbank {
  int n_mels;
  int n_fft;
  std::vector<std::vector<double>> weights;  // n_mels x (n_fft/2 + 1)

  MelFilterbank(int n_mels_, int n_fft_, double fmin, double fmax, int sample_rate)
      : n_mels(n_mels_), n_fft(n_fft_) {
    const int n_bins = n_fft / 2 + 1;
    std::vector<double> mel_pts(n_mels + 2);
    const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
    for (int i = 0; i < n_mels + 2; ++i)
      mel_pts[i] = mel_to_hz(mlo + (mhi - mlo) * i / (n_mels + 1));
    weights.assign(n_mels, std::vector<double>(n_bins, 0.0));
    for (int m = 0; m < n_mels; ++m) {
      const double left = mel_pts[m], center = mel_pts[m + 1], right = mel_pts[m + 2];
      for (int k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate / n_fft;
        if (f <= left || f >= right) continue;
        weights[m][k] = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
      }
    }
  }

  std::vector<double> apply(const std::vector<double>& power) const {
    std::vector<double> out(n_mels, 0.0);
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (size_t k = 0; k < power.size(); ++k) acc += weights[m][k] * power[k];
      out[m] = acc;
    }
    return out;
  }
};

// Binary median filter with edge replication; window must be odd.
inline BinaryRow median_filter(const BinaryRow& x, int window) {
  if (window % 2 == 0 || window <= 0)
    throw ValidationError("median filter window must be odd and positive");
  if (window == 1 || x.empty()) return x;
  const int T = static_cast<int>(x.size());
  const int half = window / 2;
  BinaryRow out(T);
  for (int t = 0; t < T; ++t) {
    int ones = 0;
    for (int k = -half; k <= half; ++k) {
      int i = t + k;
      if (i < 0) i = 0;
      if (i >= T) i = T - 1;
      ones += x[i];
    }
    out[t] = ones * 2 > window ? 1 : 0;
  }
  return out;
}

}  // namespace ptsd
