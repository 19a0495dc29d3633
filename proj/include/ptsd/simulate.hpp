#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ptsd/audio.hpp"
#include "ptsd/labels.hpp"
#include "ptsd/rng.hpp"
#include "ptsd/rttm.hpp"
#include "ptsd/synth.hpp"

namespace ptsd {

// Turn-taking statistics. Defaults are tuned only so every clip exhibits all
// three counter classes; everything is configurable.
struct ConversationStats {
  double pause_mu = -0.2, pause_sigma = 0.8;      // log-normal, seconds
  double overlap_probability = 0.3;
  double overlap_mu = -0.7, overlap_sigma = 0.7;  // log-normal, seconds
  double utterance_min = 1.5, utterance_max = 6.0;
  std::vector<double> turn_weights;  // per speaker; empty = uniform
  double target_rms = 0.1;
  double noise_floor_rms = 1e-4;

  void validate() const {
    if (overlap_probability < 0.0 || overlap_probability > 1.0)
      throw ValidationError("overlap_probability must be in [0,1]");
    if (pause_sigma <= 0.0 || overlap_sigma <= 0.0)
      throw ValidationError("log-normal sigma must be positive");
    if (utterance_min <= 0.0 || utterance_max < utterance_min)
      throw ValidationError("utterance duration range must be positive");
  }
};

struct Conversation {
  AudioClip audio;
  SegmentAnnotation annotation;
  std::vector<SpeakerProfile> profiles;
};

namespace detail {

struct Turn {
  int speaker = 0;
  double onset = 0.0;
  double duration = 0.0;
};

inline std::vector<Turn> sample_turns(const ConversationStats& stats, int n_speakers,
                                      double target_duration, Rng& rng) {
  std::vector<double> weights = stats.turn_weights;
  if (weights.empty()) weights.assign(n_speakers, 1.0);
  if (static_cast<int>(weights.size()) != n_speakers)
    throw ValidationError("turn_weights size must match the number of speakers");

  std::vector<Turn> turns;
  std::vector<double> last_offset(n_speakers, 0.0);

  int current = static_cast<int>(rng.weighted_index(weights));
  double onset = 0.0;
  while (true) {
    Turn turn;
    turn.speaker = current;
    turn.onset = quantize_ms(onset);
    const double u = rng.uniform(stats.utterance_min, stats.utterance_max);
    turn.duration = quantize_ms(std::min(u, target_duration - turn.onset));
    while (turn.onset + turn.duration > target_duration) turn.duration -= 0.001;
    if (turn.duration < 0.05) break;
    const double offset = turn.onset + turn.duration;
    turns.push_back(turn);
    last_offset[current] = offset;

    // next speaker differs from the current one
    std::vector<double> w = weights;
    w[current] = 0.0;
    const int next = static_cast<int>(rng.weighted_index(w));

    double next_onset;
    if (rng.bernoulli(stats.overlap_probability)) {
      const double ov = std::min(rng.log_normal(stats.overlap_mu, stats.overlap_sigma),
                                 0.8 * turn.duration);
      next_onset = offset - ov;
    } else {
      next_onset = offset + rng.log_normal(stats.pause_mu, stats.pause_sigma);
    }
    // a speaker's own segments must never overlap
    if (next_onset < last_offset[next] + 0.01) next_onset = last_offset[next] + 0.01;
    if (next_onset >= target_duration - 0.05) break;
    current = next;
    onset = next_onset;
  }
  return turns;
}

}  // namespace detail

// Samples a conversation: sequential turns, overlap with the configured
// probability, utterances mixed additively, annotation exact by construction.
// Every speaker in `profiles` appears at least once; the speaker order is
// resampled until that holds.
inline Conversation sample_conversation(const ConversationStats& stats,
                                        const std::vector<SpeakerProfile>& profiles,
                                        double target_duration, uint64_t seed) {
  stats.validate();
  const int n_speakers = static_cast<int>(profiles.size());
  if (n_speakers < 2 || n_speakers > 4)
    throw ValidationError("sample_conversation: need 2 to 4 speaker profiles");
  if (target_duration < n_speakers * stats.utterance_min)
    throw ValidationError("target_duration too short to place one turn per speaker");

  std::vector<detail::Turn> turns;
  Rng rng = Rng::substream(seed, 0);
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 1000)
      throw std::runtime_error("sample_conversation: could not cover all speakers");
    rng = Rng::substream(seed, static_cast<uint64_t>(attempt));
    turns = detail::sample_turns(stats, n_speakers, target_duration, rng);
    std::vector<bool> seen(n_speakers, false);
    for (const auto& t : turns) seen[t.speaker] = true;
    if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) break;
  }

  Conversation conv;
  conv.profiles = profiles;
  conv.annotation.duration = target_duration;
  const long n_samples = std::lround(target_duration * SAMPLE_RATE);
  conv.audio.samples.assign(n_samples, 0.0);

  for (const auto& turn : turns) {
    const auto& prof = profiles[turn.speaker];
    AudioClip utt = synth_utterance(prof, turn.duration, rng, stats.target_rms);
    const long at = std::lround(turn.onset * SAMPLE_RATE);
    for (size_t i = 0; i < utt.samples.size() && at + static_cast<long>(i) < n_samples; ++i)
      conv.audio.samples[at + i] += utt.samples[i];
    conv.annotation.segments.push_back(
        {prof.speaker_id, turn.onset, quantize_ms(turn.onset + turn.duration)});
  }

  if (stats.noise_floor_rms > 0.0)
    for (auto& s : conv.audio.samples) s += stats.noise_floor_rms * rng.normal();

  // additive mixing may clip; rescale the whole clip (labels unaffected)
  double peak = 0.0;
  for (double s : conv.audio.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0) {
    const double g = 0.99 / peak;
    for (auto& s : conv.audio.samples) s *= g;
  }

  std::sort(conv.annotation.segments.begin(), conv.annotation.segments.end(),
            [](const SpeechSegment& a, const SpeechSegment& b) {
              return a.onset != b.onset ? a.onset < b.onset : a.speaker_id < b.speaker_id;
            });
  conv.annotation.validate();
  return conv;
}

// One manifest record per clip.
struct ManifestRecord {
  std::string clip_id;
  std::string wav_path;   // relative to the manifest directory
  std::string rttm_path;  // relative to the manifest directory
  int n_speakers = 0;
  std::vector<SpeakerProfile> profiles;  // id + gender only
};

struct DatasetManifest {
  std::string path;  // where it was loaded from / written to
  std::vector<ManifestRecord> records;

  std::string resolve(const std::string& rel) const {
    return (std::filesystem::path(path).parent_path() / rel).string();
  }
};

inline std::string manifest_line(const ManifestRecord& r) {
  std::string line = r.clip_id + "\t" + r.wav_path + "\t" + r.rttm_path + "\t" +
                     std::to_string(r.n_speakers);
  for (const auto& p : r.profiles) line += "\t" + p.speaker_id + ":" + to_string(p.gender);
  return line + "\n";
}

inline ManifestRecord parse_manifest_line(const std::string& line, const std::string& where) {
  std::istringstream ls(line);
  ManifestRecord r;
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(ls, field, '\t')) fields.push_back(field);
  if (fields.size() < 5) throw ValidationError(where + ": manifest line needs >= 5 fields");
  r.clip_id = fields[0];
  r.wav_path = fields[1];
  r.rttm_path = fields[2];
  r.n_speakers = std::stoi(fields[3]);
  for (size_t i = 4; i < fields.size(); ++i) {
    auto colon = fields[i].find(':');
    if (colon == std::string::npos)
      throw ValidationError(where + ": speaker field must be id:gender");
    SpeakerProfile p;
    p.speaker_id = fields[i].substr(0, colon);
    p.gender = gender_from_string(fields[i].substr(colon + 1));
    r.profiles.push_back(p);
  }
  if (static_cast<int>(r.profiles.size()) != r.n_speakers)
    throw ValidationError(where + ": speaker count does not match n_speakers");
  return r;
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  DatasetManifest m;
  m.path = path;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    m.records.push_back(parse_manifest_line(line, path + ":" + std::to_string(line_no)));
  }
  return m;
}

// Writes WAV + RTTM + manifest under out_dir. Idempotent for a fixed seed:
// reruns produce byte-identical files.
inline DatasetManifest build_dataset(const ConversationStats& stats, int n_speakers, int n_clips,
                                     double clip_duration, const std::string& out_dir,
                                     uint64_t seed) {
  if (n_speakers < 2 || n_speakers > 4)
    throw ValidationError("n_speakers must be one of {2, 3, 4}");
  if (n_clips <= 0) throw ValidationError("n_clips must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());

  DatasetManifest manifest;
  manifest.path = (std::filesystem::path(out_dir) / "manifest.tsv").string();
  std::string manifest_text;

  for (int c = 0; c < n_clips; ++c) {
    // independent RNG stream per clip so parallel and serial runs agree
    const uint64_t clip_seed = splitmix_pair(seed, static_cast<uint64_t>(c));
    Rng gender_rng = Rng::substream(clip_seed, 0xbeefULL);
    // genders alternate from a random start, so both appear in every clip
    const bool female_first = gender_rng.bernoulli(0.5);
    std::vector<SpeakerProfile> profiles;
    for (int s = 0; s < n_speakers; ++s) {
      const Gender g = ((s % 2 == 0) == female_first) ? Gender::female : Gender::male;
      SpeakerProfile p = synth_speaker(splitmix_pair(clip_seed, static_cast<uint64_t>(s)), g);
      p.speaker_id = "spk" + std::to_string(s + 1);
      profiles.push_back(p);
    }

    char name[64];
    std::snprintf(name, sizeof(name), "clip_%04d", c);
    Conversation conv = sample_conversation(stats, profiles, clip_duration, clip_seed);
    conv.audio.clip_id = name;
    conv.annotation.clip_id = name;

    ManifestRecord rec;
    rec.clip_id = name;
    rec.wav_path = std::string(name) + ".wav";
    rec.rttm_path = std::string(name) + ".rttm";
    rec.n_speakers = n_speakers;
    for (const auto& p : profiles) {
      SpeakerProfile slim;
      slim.speaker_id = p.speaker_id;
      slim.gender = p.gender;
      rec.profiles.push_back(slim);
    }
    manifest.records.push_back(rec);
    manifest_text += manifest_line(rec);

    try {
      write_wav(manifest.resolve(rec.wav_path), conv.audio);
      write_rttm(manifest.resolve(rec.rttm_path), conv.annotation);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("build_dataset: ") + e.what());
    }
  }

  std::ofstream mf(manifest.path);
  if (!mf) throw std::runtime_error("cannot open for writing: " + manifest.path);
  mf << manifest_text;
  return manifest;
}

}  // namespace ptsd
