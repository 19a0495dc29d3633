#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ptsd/common.hpp"
#include "ptsd/types.hpp"

namespace ptsd {

// Speaker-activity matrix: one binary row per speaker, row order = sorted
// speaker ids.
struct ActivityMatrix {
  std::vector<std::string> speakers;
  std::vector<BinaryRow> rows;
  int n_frames = 0;

  int speaker_row(const std::string& id) const {
    for (size_t i = 0; i < speakers.size(); ++i)
      if (speakers[i] == id) return static_cast<int>(i);
    return -1;
  }

  int active_count(int frame) const {
    int k = 0;
    for (const auto& r : rows) k += r[frame];
    return k;
  }
};

// Frame t is active iff its center time (t + 0.5) / 25 lies inside any
// segment [onset, offset) of the speaker.
inline ActivityMatrix segments_to_activity(const SegmentAnnotation& ann,
                                           int frame_rate = FRAME_RATE) {
  if (frame_rate != FRAME_RATE)
    throw ValidationError("segments_to_activity: frame rate is fixed at 25/s");
  ann.validate();
  ActivityMatrix act;
  act.n_frames = frames_for_duration(ann.duration);
  act.speakers = ann.speaker_ids();
  act.rows.assign(act.speakers.size(), BinaryRow(act.n_frames, 0));
  for (const auto& seg : ann.segments) {
    const int row = act.speaker_row(seg.speaker_id);
    for (int t = 0; t < act.n_frames; ++t) {
      const double c = frame_to_time(t);
      if (seg.onset <= c && c < seg.offset) act.rows[row][t] = 1;
    }
  }
  return act;
}

// 3 x T one-hot rows ordered (non-speech, single, overlap).
inline std::array<BinaryRow, 3> derive_counter_labels(const ActivityMatrix& act) {
  std::array<BinaryRow, 3> out;
  for (auto& r : out) r.assign(act.n_frames, 0);
  for (int t = 0; t < act.n_frames; ++t) {
    const int k = act.active_count(t);
    out[k == 0 ? 0 : (k == 1 ? 1 : 2)][t] = 1;
  }
  return out;
}

// 2 x T rows ordered (female, male); both may be 1 on mixed-gender overlap.
inline std::array<BinaryRow, 2> derive_gender_labels(const ActivityMatrix& act,
                                                     const std::vector<SpeakerProfile>& profiles) {
  std::map<std::string, Gender> gender_of;
  for (const auto& p : profiles) gender_of[p.speaker_id] = p.gender;
  std::array<BinaryRow, 2> out;
  for (auto& r : out) r.assign(act.n_frames, 0);
  for (size_t s = 0; s < act.speakers.size(); ++s) {
    auto it = gender_of.find(act.speakers[s]);
    if (it == gender_of.end())
      throw ValidationError("derive_gender_labels: no profile for speaker " + act.speakers[s]);
    BinaryRow& row = out[it->second == Gender::female ? 0 : 1];
    for (int t = 0; t < act.n_frames; ++t)
      if (act.rows[s][t]) row[t] = 1;
  }
  return out;
}

struct KeynoteLabels {
  BinaryRow row;
  std::string speaker_id;
};

// Keynote speaker = argmax of total active frames within this label window;
// ties break to the lexicographically smallest speaker_id.
inline KeynoteLabels derive_keynote_labels(const ActivityMatrix& act) {
  int best = -1;
  long best_count = 0;
  for (size_t s = 0; s < act.speakers.size(); ++s) {
    long count = 0;
    for (int t = 0; t < act.n_frames; ++t) count += act.rows[s][t];
    if (count > best_count) {
      best_count = count;
      best = static_cast<int>(s);
    }
    // speakers are already in ascending id order, so strict > keeps the
    // smallest id on ties
  }
  if (best < 0) throw ValidationError("derive_keynote_labels: no keynote definable (all silent)");
  return {act.rows[best], act.speakers[best]};
}

struct Interval {
  double onset = 0.0;
  double offset = 0.0;
};

// Maximal runs of 1s mapped to (start/25, end/25); runs shorter than
// min_duration are dropped. With min_duration = 0 this is the exact inverse
// of segments_to_activity on a single row.
inline std::vector<Interval> frames_to_segments(const BinaryRow& row,
                                                int frame_rate = FRAME_RATE,
                                                double min_duration = 0.0) {
  std::vector<Interval> out;
  const int T = static_cast<int>(row.size());
  int t = 0;
  while (t < T) {
    if (!row[t]) {
      ++t;
      continue;
    }
    int end = t;
    while (end < T && row[end]) ++end;
    const double on = static_cast<double>(t) / frame_rate;
    const double off = static_cast<double>(end) / frame_rate;
    if (off - on >= min_duration - 1e-12) out.push_back({on, off});
    t = end;
  }
  return out;
}

// Builds the label row matching one prompt spec. Returns the bound speaker id
// for timestamped/keynote prompts.
inline std::pair<EventDescriptor, BinaryRow> label_row_for(
    const PromptSpec& spec, const ActivityMatrix& act,
    const std::vector<SpeakerProfile>& profiles) {
  EventDescriptor desc;
  desc.spec = spec;
  switch (spec.kind) {
    case AttributeKind::timestamped_speaker: {
      if (spec.anchor_frame < 0 || spec.anchor_frame >= act.n_frames)
        throw ValidationError("timestamped prompt anchor frame out of range");
      // the anchored speaker is whoever is active at the anchor; must be solo
      int hit = -1;
      for (size_t s = 0; s < act.rows.size(); ++s) {
        if (act.rows[s][spec.anchor_frame]) {
          if (hit >= 0)
            throw ValidationError("timestamped anchor falls in overlapped speech");
          hit = static_cast<int>(s);
        }
      }
      if (hit < 0) throw ValidationError("timestamped anchor falls in non-speech");
      desc.bound_speaker_id = act.speakers[hit];
      return {desc, act.rows[hit]};
    }
    case AttributeKind::gender: {
      auto g = derive_gender_labels(act, profiles);
      return {desc, g[spec.gender == Gender::female ? 0 : 1]};
    }
    case AttributeKind::speaker_count: {
      auto c = derive_counter_labels(act);
      return {desc, c[static_cast<int>(spec.count_class)]};
    }
    default: {
      auto k = derive_keynote_labels(act);
      desc.bound_speaker_id = k.speaker_id;
      return {desc, k.row};
    }
  }
}

inline FrameLabelSet build_label_set(const std::vector<PromptSpec>& specs,
                                     const ActivityMatrix& act,
                                     const std::vector<SpeakerProfile>& profiles) {
  FrameLabelSet out;
  out.n_frames = act.n_frames;
  for (const auto& spec : specs) out.rows.push_back(label_row_for(spec, act, profiles));
  return out;
}

// Column window [begin, begin + count) of an activity matrix, speakers kept.
inline ActivityMatrix slice_activity(const ActivityMatrix& act, int begin, int count) {
  if (begin < 0 || count < 0 || begin + count > act.n_frames)
    throw ValidationError("slice_activity: window out of range");
  ActivityMatrix out;
  out.speakers = act.speakers;
  out.n_frames = count;
  out.rows.reserve(act.rows.size());
  for (const auto& r : act.rows)
    out.rows.emplace_back(r.begin() + begin, r.begin() + begin + count);
  return out;
}

}  // namespace ptsd
