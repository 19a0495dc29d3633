#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ptsd/dsp.hpp"
#include "ptsd/labels.hpp"
#include "ptsd/simulate.hpp"

using namespace ptsd;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int dominant_bin(const AudioClip& clip) {
  const int n = 4096;
  std::vector<double> frame(n);
  const size_t mid = clip.samples.size() / 2;
  for (int i = 0; i < n; ++i) frame[i] = clip.samples[mid - n / 2 + i];
  const auto power = power_spectrum(frame.data(), n, n);
  int best = 1;
  for (int k = 1; k < n / 2; ++k)
    if (power[k] > power[best]) best = k;
  return best;
}

}  // namespace

TEST(SynthSpeaker, DeterministicAndInRange) {
  const auto a = synth_speaker(42, Gender::female);
  const auto b = synth_speaker(42, Gender::female);
  EXPECT_EQ(a.f0_base_hz, b.f0_base_hz);
  EXPECT_EQ(a.formant_hz, b.formant_hz);
  EXPECT_EQ(a.formant_gain, b.formant_gain);
  EXPECT_GE(a.f0_base_hz, FEMALE_F0_MIN);
  EXPECT_LE(a.f0_base_hz, FEMALE_F0_MAX);
  const auto m = synth_speaker(42, Gender::male);
  EXPECT_GE(m.f0_base_hz, MALE_F0_MIN);
  EXPECT_LE(m.f0_base_hz, MALE_F0_MAX);
}

TEST(SynthSpeaker, HundredSeedsPairwiseDistinct) {
  std::vector<SpeakerProfile> profiles;
  for (uint64_t s = 0; s < 100; ++s)
    profiles.push_back(synth_speaker(s, s % 2 ? Gender::female : Gender::male));
  int collisions = 0;
  for (size_t i = 0; i < profiles.size(); ++i)
    for (size_t j = i + 1; j < profiles.size(); ++j)
      if (profiles[i].formant_hz == profiles[j].formant_hz &&
          profiles[i].f0_base_hz == profiles[j].f0_base_hz)
        ++collisions;
  EXPECT_LE(collisions, 1);
}

TEST(SynthUtterance, SampleCountAndRms) {
  const auto profile = synth_speaker(3, Gender::male);
  Rng rng(5);
  const auto clip = synth_utterance(profile, 1.0, rng, 0.1);
  EXPECT_EQ(clip.samples.size(), 16000u);
  EXPECT_NEAR(clip.rms(), 0.1, 0.005);  // within 5% of the configured level

  Rng rng2(5);
  EXPECT_EQ(synth_utterance(profile, 0.33, rng2).samples.size(),
            static_cast<size_t>(std::lround(0.33 * 16000)));
  EXPECT_THROW(synth_utterance(profile, 0.0, rng), ValidationError);
}

TEST(SynthUtterance, DistinctSpectralPeaks) {
  const auto p1 = synth_speaker(11, Gender::female);
  const auto p2 = synth_speaker(12, Gender::male);
  Rng ra(9), rb(9);
  const auto c1 = synth_utterance(p1, 1.0, ra);
  const auto c2 = synth_utterance(p2, 1.0, rb);
  EXPECT_NE(dominant_bin(c1), dominant_bin(c2));
}

TEST(SampleConversation, NoOverlapWhenProbabilityZero) {
  ConversationStats stats;
  stats.overlap_probability = 0.0;
  const std::vector<SpeakerProfile> profiles = {synth_speaker(1, Gender::female),
                                                synth_speaker(2, Gender::male)};
  const auto conv = sample_conversation(stats, profiles, 20.0, 77);
  const auto act = segments_to_activity(conv.annotation);
  const auto counter = derive_counter_labels(act);
  for (int t = 0; t < act.n_frames; ++t) EXPECT_EQ(counter[2][t], 0) << "frame " << t;
}

TEST(SampleConversation, DeterministicForFixedSeed) {
  ConversationStats stats;
  const std::vector<SpeakerProfile> profiles = {synth_speaker(1, Gender::female),
                                                synth_speaker(2, Gender::male)};
  const auto a = sample_conversation(stats, profiles, 15.0, 3);
  const auto b = sample_conversation(stats, profiles, 15.0, 3);
  EXPECT_EQ(a.audio.samples, b.audio.samples);
  ASSERT_EQ(a.annotation.segments.size(), b.annotation.segments.size());
  for (size_t i = 0; i < a.annotation.segments.size(); ++i) {
    EXPECT_EQ(a.annotation.segments[i].onset, b.annotation.segments[i].onset);
    EXPECT_EQ(a.annotation.segments[i].offset, b.annotation.segments[i].offset);
  }
}

TEST(SampleConversation, TooShortThrows) {
  ConversationStats stats;
  const std::vector<SpeakerProfile> profiles = {synth_speaker(1, Gender::female),
                                                synth_speaker(2, Gender::male),
                                                synth_speaker(3, Gender::female)};
  EXPECT_THROW(sample_conversation(stats, profiles, 2.0, 1), ValidationError);
}

TEST(SampleConversation, OverlapRateMonteCarlo) {
  ConversationStats stats;
  stats.overlap_probability = 0.3;
  long overlapped = 0, transitions = 0;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = Rng::substream(seed, 0);
    const auto turns = detail::sample_turns(stats, 3, 60.0, rng);
    for (size_t i = 1; i < turns.size(); ++i) {
      ++transitions;
      const double prev_offset = turns[i - 1].onset + turns[i - 1].duration;
      if (turns[i].onset < prev_offset - 1e-9) ++overlapped;
    }
  }
  const double rate = static_cast<double>(overlapped) / transitions;
  EXPECT_GE(rate, 0.25);
  EXPECT_LE(rate, 0.35);
}

TEST(SampleConversation, LabelFidelityFromEmittedRttm) {
  ConversationStats stats;
  for (uint64_t seed : {10ULL, 11ULL}) {
    const std::vector<SpeakerProfile> profiles = {synth_speaker(seed * 2, Gender::female),
                                                  synth_speaker(seed * 2 + 1, Gender::male)};
    auto conv = sample_conversation(stats, profiles, 12.0, seed);
    conv.annotation.clip_id = "fid";
    std::istringstream rt(rttm_string(conv.annotation));
    const auto parsed = parse_rttm(rt, "mem", conv.annotation.duration);
    const auto from_trace = segments_to_activity(conv.annotation);
    const auto from_rttm = segments_to_activity(parsed);
    ASSERT_EQ(from_trace.speakers, from_rttm.speakers);
    EXPECT_EQ(from_trace.rows, from_rttm.rows);
  }
}

TEST(SampleConversation, NonSpeechQuieterThanActiveMedian) {
  ConversationStats stats;
  const std::vector<SpeakerProfile> profiles = {synth_speaker(21, Gender::female),
                                                synth_speaker(22, Gender::male)};
  const auto conv = sample_conversation(stats, profiles, 15.0, 5);
  const auto act = segments_to_activity(conv.annotation);
  const auto counter = derive_counter_labels(act);

  auto frame_energy = [&](int t) {
    double acc = 0.0;
    for (int i = 0; i < SAMPLES_PER_FRAME; ++i) {
      const size_t idx = static_cast<size_t>(t) * SAMPLES_PER_FRAME + i;
      if (idx < conv.audio.samples.size()) acc += conv.audio.samples[idx] * conv.audio.samples[idx];
    }
    return acc;
  };

  std::vector<double> active;
  for (int t = 0; t < act.n_frames; ++t)
    if (!counter[0][t]) active.push_back(frame_energy(t));
  ASSERT_FALSE(active.empty());
  std::sort(active.begin(), active.end());
  const double median = active[active.size() / 2];
  for (int t = 0; t < act.n_frames; ++t)
    if (counter[0][t]) EXPECT_LT(frame_energy(t), median) << "frame " << t;
}

TEST(BuildDataset, IdempotentAndWellFormed) {
  const auto dir = std::filesystem::temp_directory_path() / "ptsd_sim_test";
  std::filesystem::remove_all(dir);
  ConversationStats stats;
  const auto manifest = build_dataset(stats, 2, 3, 10.0, dir.string(), 9);
  ASSERT_EQ(manifest.records.size(), 3u);

  const std::string manifest_bytes = slurp(manifest.path);
  const std::string wav_bytes0 = slurp(manifest.resolve(manifest.records[0].wav_path));
  const std::string rttm_bytes0 = slurp(manifest.resolve(manifest.records[0].rttm_path));

  const auto audio = read_wav(manifest.resolve(manifest.records[0].wav_path));
  EXPECT_EQ(audio.samples.size(), static_cast<size_t>(10 * SAMPLE_RATE));

  // rerun with the same seed: byte-identical outputs
  const auto again = build_dataset(stats, 2, 3, 10.0, dir.string(), 9);
  EXPECT_EQ(slurp(again.path), manifest_bytes);
  EXPECT_EQ(slurp(manifest.resolve(manifest.records[0].wav_path)), wav_bytes0);
  EXPECT_EQ(slurp(manifest.resolve(manifest.records[0].rttm_path)), rttm_bytes0);

  const auto parsed = read_manifest(manifest.path);
  ASSERT_EQ(parsed.records.size(), 3u);
  EXPECT_EQ(parsed.records[1].clip_id, "clip_0001");
  EXPECT_EQ(parsed.records[1].n_speakers, 2);
  EXPECT_EQ(parsed.records[1].profiles.size(), 2u);

  std::filesystem::remove_all(dir);
}

TEST(BuildDataset, FourSpeakerRttmHasFourIds) {
  const auto dir = std::filesystem::temp_directory_path() / "ptsd_sim4_test";
  std::filesystem::remove_all(dir);
  ConversationStats stats;
  const auto manifest = build_dataset(stats, 4, 2, 20.0, dir.string(), 13);
  for (const auto& rec : manifest.records) {
    const auto ann = read_rttm(manifest.resolve(rec.rttm_path));
    EXPECT_EQ(ann.speaker_ids().size(), 4u);
  }
  EXPECT_THROW(build_dataset(stats, 5, 1, 10.0, dir.string(), 1), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST(WavIo, RoundTripWithinQuantization) {
  AudioClip clip;
  Rng rng(3);
  clip.samples.resize(1000);
  for (auto& s : clip.samples) s = rng.uniform(-0.9, 0.9);
  const auto path = (std::filesystem::temp_directory_path() / "ptsd_wav_test.wav").string();
  write_wav(path, clip);
  const auto back = read_wav(path);
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i)
    EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32767.0);
  std::filesystem::remove(path);
}
