#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ptsd/common.hpp"

namespace ptsd {

enum class Gender { female, male };

inline const char* to_string(Gender g) { return g == Gender::female ? "female" : "male"; }

inline Gender gender_from_string(const std::string& s) {
  if (s == "female") return Gender::female;
  if (s == "male") return Gender::male;
  throw ValidationError("unknown gender value: '" + s + "'");
}

// The three speaker-count classes, one-hot per frame.
enum class CountClass { non_speech, single, overlap };

inline const char* to_string(CountClass c) {
  switch (c) {
    case CountClass::non_speech: return "non-speech";
    case CountClass::single: return "single";
    default: return "overlap";
  }
}

inline CountClass count_class_from_string(const std::string& s) {
  if (s == "non-speech") return CountClass::non_speech;
  if (s == "single") return CountClass::single;
  if (s == "overlap") return CountClass::overlap;
  throw ValidationError("unknown speaker-count class: '" + s + "'");
}

// The four semantic attributes a prompt can query.
enum class AttributeKind { timestamped_speaker, gender, speaker_count, keynote };

inline const char* attribute_name(AttributeKind k) {
  switch (k) {
    case AttributeKind::timestamped_speaker: return "T";
    case AttributeKind::gender: return "G";
    case AttributeKind::speaker_count: return "N";
    default: return "K";
  }
}

struct SpeakerProfile {
  std::string speaker_id;
  Gender gender = Gender::female;
  // Synthesis parameters, used only by the simulator.
  double f0_base_hz = 0.0;
  std::vector<double> formant_hz;    // center frequencies
  std::vector<double> formant_gain;  // unitless shaping coefficients
};

struct SpeechSegment {
  std::string speaker_id;
  double onset = 0.0;
  double offset = 0.0;
};

// Per-speaker speech segments; the single ground-truth source from which all
// frame labels derive.
struct SegmentAnnotation {
  std::string clip_id;
  double duration = 0.0;
  std::vector<SpeechSegment> segments;

  std::vector<std::string> speaker_ids() const {
    std::set<std::string> ids;
    for (const auto& s : segments) ids.insert(s.speaker_id);
    return {ids.begin(), ids.end()};
  }

  // Checks segment bounds and that segments of one speaker never overlap
  // each other (distinct speakers may).
  void validate() const {
    if (duration <= 0.0) throw ValidationError(clip_id + ": non-positive duration");
    for (const auto& s : segments) {
      if (!(0.0 <= s.onset && s.onset < s.offset && s.offset <= duration + 1e-9))
        throw ValidationError(clip_id + ": segment [" + std::to_string(s.onset) + ", " +
                              std::to_string(s.offset) + ") outside [0, " +
                              std::to_string(duration) + "] for speaker " + s.speaker_id);
    }
    auto sorted = segments;
    std::sort(sorted.begin(), sorted.end(), [](const SpeechSegment& a, const SpeechSegment& b) {
      return a.speaker_id != b.speaker_id ? a.speaker_id < b.speaker_id : a.onset < b.onset;
    });
    for (size_t i = 1; i < sorted.size(); ++i) {
      if (sorted[i].speaker_id == sorted[i - 1].speaker_id &&
          sorted[i].onset < sorted[i - 1].offset - 1e-9)
        throw ValidationError(clip_id + ": overlapping segments for speaker " +
                              sorted[i].speaker_id);
    }
  }
};

// A symbolic query: one semantic attribute plus one of its values.
struct PromptSpec {
  AttributeKind kind = AttributeKind::keynote;
  int anchor_frame = -1;                     // timestamped_speaker only
  Gender gender = Gender::female;            // gender only
  CountClass count_class = CountClass::single;  // speaker_count only

  static PromptSpec timestamped(int frame) {
    PromptSpec p;
    p.kind = AttributeKind::timestamped_speaker;
    p.anchor_frame = frame;
    return p;
  }
  static PromptSpec of_gender(Gender g) {
    PromptSpec p;
    p.kind = AttributeKind::gender;
    p.gender = g;
    return p;
  }
  static PromptSpec of_count(CountClass c) {
    PromptSpec p;
    p.kind = AttributeKind::speaker_count;
    p.count_class = c;
    return p;
  }
  static PromptSpec keynote() { return PromptSpec{}; }

  bool operator==(const PromptSpec& o) const {
    if (kind != o.kind) return false;
    switch (kind) {
      case AttributeKind::timestamped_speaker: return anchor_frame == o.anchor_frame;
      case AttributeKind::gender: return gender == o.gender;
      case AttributeKind::speaker_count: return count_class == o.count_class;
      default: return true;
    }
  }
};

// A prompt spec plus the speaker it resolved to (timestamped/keynote rows,
// scoring only).
struct EventDescriptor {
  PromptSpec spec;
  std::string bound_speaker_id;

  // Wire form used in score dumps: "T:450", "G:female", "N:overlap", "K",
  // with an optional "@speaker" suffix when the binding is known. "E" marks
  // an enrollment-conditioned row (baseline systems).
  std::string to_string() const {
    std::string s;
    switch (spec.kind) {
      case AttributeKind::timestamped_speaker:
        s = spec.anchor_frame < 0 ? "E" : "T:" + std::to_string(spec.anchor_frame);
        break;
      case AttributeKind::gender:
        s = std::string("G:") + ptsd::to_string(spec.gender);
        break;
      case AttributeKind::speaker_count:
        s = std::string("N:") + ptsd::to_string(spec.count_class);
        break;
      default:
        s = "K";
    }
    if (!bound_speaker_id.empty()) s += "@" + bound_speaker_id;
    return s;
  }

  static EventDescriptor parse(const std::string& text) {
    EventDescriptor d;
    std::string body = text;
    auto at = body.find('@');
    if (at != std::string::npos) {
      d.bound_speaker_id = body.substr(at + 1);
      body = body.substr(0, at);
    }
    if (body == "K") {
      d.spec = PromptSpec::keynote();
    } else if (body == "E") {
      d.spec.kind = AttributeKind::timestamped_speaker;
      d.spec.anchor_frame = -1;
    } else if (body.rfind("T:", 0) == 0) {
      d.spec = PromptSpec::timestamped(std::stoi(body.substr(2)));
    } else if (body.rfind("G:", 0) == 0) {
      d.spec = PromptSpec::of_gender(gender_from_string(body.substr(2)));
    } else if (body.rfind("N:", 0) == 0) {
      d.spec = PromptSpec::of_count(count_class_from_string(body.substr(2)));
    } else {
      throw ValidationError("unparseable event descriptor: '" + text + "'");
    }
    return d;
  }
};

using BinaryRow = std::vector<uint8_t>;

// Binary event-by-frame matrix at 25 frames/s, one row per semantic value.
struct FrameLabelSet {
  int frame_rate = FRAME_RATE;
  int n_frames = 0;
  std::vector<std::pair<EventDescriptor, BinaryRow>> rows;

  const BinaryRow* find(const PromptSpec& spec) const {
    for (const auto& [d, row] : rows)
      if (d.spec == spec) return &row;
    return nullptr;
  }
};

}  // namespace ptsd
