#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ptsd/common.hpp"

namespace ptsd {

// 16 kHz mono audio, samples in [-1, 1].
struct AudioClip {
  std::string clip_id;
  std::vector<double> samples;

  double duration() const { return static_cast<double>(samples.size()) / SAMPLE_RATE; }

  double rms() const {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (double s : samples) acc += s * s;
    return std::sqrt(acc / samples.size());
  }
};

namespace detail {

struct WavHeader {
  char riff[4];
  uint32_t file_size;
  char wave[4];
};

inline void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

// Serializes as 16 kHz mono 16-bit PCM. Returning the bytes (rather than
// streaming) makes byte-identity tests cheap.
inline std::string wav_bytes(const AudioClip& clip) {
  const uint32_t n = static_cast<uint32_t>(clip.samples.size());
  const uint32_t data_size = n * 2;
  std::string buf;
  buf.reserve(44 + data_size);
  buf.append("RIFF");
  detail::put_u32(buf, 36 + data_size);
  buf.append("WAVE");
  buf.append("fmt ");
  detail::put_u32(buf, 16);
  detail::put_u16(buf, 1);  // PCM
  detail::put_u16(buf, 1);  // mono
  detail::put_u32(buf, SAMPLE_RATE);
  detail::put_u32(buf, SAMPLE_RATE * 2);
  detail::put_u16(buf, 2);
  detail::put_u16(buf, 16);
  buf.append("data");
  detail::put_u32(buf, data_size);
  for (uint32_t i = 0; i < n; ++i) {
    double s = clip.samples[i];
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    const int16_t q = static_cast<int16_t>(std::lrint(s * 32767.0));
    detail::put_u16(buf, static_cast<uint16_t>(q));
  }
  return buf;
}

inline void write_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  const std::string bytes = wav_bytes(clip);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline AudioClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char riff[12];
  f.read(riff, 12);
  if (!f || std::strncmp(riff, "RIFF", 4) != 0 || std::strncmp(riff + 8, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file: " + path);

  uint16_t channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<int16_t> pcm;
  while (f) {
    char id[4];
    uint32_t size = 0;
    f.read(id, 4);
    f.read(reinterpret_cast<char*>(&size), 4);
    if (!f) break;
    if (std::strncmp(id, "fmt ", 4) == 0) {
      std::vector<char> fmt(size);
      f.read(fmt.data(), size);
      uint16_t format;
      std::memcpy(&format, fmt.data(), 2);
      std::memcpy(&channels, fmt.data() + 2, 2);
      std::memcpy(&rate, fmt.data() + 4, 4);
      std::memcpy(&bits, fmt.data() + 14, 2);
      if (format != 1) throw std::runtime_error(path + ": only PCM supported");
    } else if (std::strncmp(id, "data", 4) == 0) {
      pcm.resize(size / 2);
      f.read(reinterpret_cast<char*>(pcm.data()), size);
      break;
    } else {
      f.seekg(size, std::ios::cur);
    }
  }
  if (channels != 1) throw std::runtime_error(path + ": expected mono");
  if (rate != SAMPLE_RATE) throw std::runtime_error(path + ": expected 16 kHz");
  if (bits != 16) throw std::runtime_error(path + ": expected 16-bit PCM");

  AudioClip clip;
  clip.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) clip.samples[i] = pcm[i] / 32767.0;
  return clip;
}

}  // namespace ptsd
