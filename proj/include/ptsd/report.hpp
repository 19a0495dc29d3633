#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ptsd/infer.hpp"
#include "ptsd/metrics.hpp"
#include "ptsd/rttm.hpp"
#include "ptsd/simulate.hpp"
#include "ptsd/train.hpp"

namespace ptsd {

struct ScoreOptions {
  double collar = 0.25;
  bool score_overlap = true;
  double threshold = 0.5;
  int median_window = 11;
  bool per_clip = false;
  std::string dataset = "eval";
  std::set<std::string> metrics;  // empty = all applicable
};

struct ReportRecord {
  std::string dataset;
  std::string attribute;
  std::string metric;
  double value = 0.0;
  bool defined = true;
};

inline std::string report_line(const ReportRecord& r) {
  char buf[256];
  if (r.defined)
    std::snprintf(buf, sizeof(buf), "%s %s %s %.6f", r.dataset.c_str(), r.attribute.c_str(),
                  r.metric.c_str(), r.value);
  else
    std::snprintf(buf, sizeof(buf), "%s %s %s undefined", r.dataset.c_str(), r.attribute.c_str(),
                  r.metric.c_str());
  return buf;
}

namespace detail {

// Reference label row for one dump descriptor. Keynote follows the per-chunk
// convention used at inference time; a silent chunk contributes zeros.
inline BinaryRow reference_row_for(const EventDescriptor& desc, const ActivityMatrix& activity,
                                   const std::vector<SpeakerProfile>& profiles,
                                   double chunk_seconds) {
  const auto& spec = desc.spec;
  if (spec.kind == AttributeKind::timestamped_speaker && spec.anchor_frame < 0) {
    const int row = activity.speaker_row(desc.bound_speaker_id);
    if (row < 0)
      throw ValidationError("enrollment row references unknown speaker '" +
                            desc.bound_speaker_id + "'");
    return activity.rows[row];
  }
  if (spec.kind == AttributeKind::keynote) {
    const int chunk_frames =
        std::max(1, static_cast<int>(std::lround(chunk_seconds * FRAME_RATE)));
    BinaryRow row(activity.n_frames, 0);
    for (int begin = 0; begin < activity.n_frames; begin += chunk_frames) {
      const int len = std::min(chunk_frames, activity.n_frames - begin);
      try {
        const auto k = derive_keynote_labels(slice_activity(activity, begin, len));
        for (int t = 0; t < len; ++t) row[begin + t] = k.row[t];
      } catch (const ValidationError&) {
        // silent chunk: no keynote event
      }
    }
    return row;
  }
  return label_row_for(spec, activity, profiles).second;
}

struct DerAccumulator {
  double miss_s = 0.0, fa_s = 0.0, conf_s = 0.0, ref_s = 0.0;
  int clips = 0;

  void add(const DerResult& r) {
    miss_s += r.miss * r.reference_seconds;
    fa_s += r.false_alarm * r.reference_seconds;
    conf_s += r.speaker_confusion * r.reference_seconds;
    ref_s += r.reference_seconds;
    ++clips;
  }

  DerResult total() const {
    DerResult out;
    out.reference_seconds = ref_s;
    if (ref_s > 0.0) {
      out.miss = miss_s / ref_s;
      out.false_alarm = fa_s / ref_s;
      out.speaker_confusion = conf_s / ref_s;
      out.der = out.miss + out.false_alarm + out.speaker_confusion;
    }
    return out;
  }
};

}  // namespace detail

// Scores a dump against the manifest's reference annotations and emits
// line-delimited (dataset, attribute, metric, value) records. AP/AUC/EER are
// pooled over frames; DER applies to speaker-valued attributes (T, E) and to
// gender diarization (G); precision/recall to the overlap class.
inline std::vector<ReportRecord> score_dump_report(const ScoreDump& dump,
                                                   const DatasetManifest& manifest,
                                                   const ScoreOptions& opt = {}) {
  if (dump.frame_rate != FRAME_RATE)
    throw ValidationError("score dump frame rate " + std::to_string(dump.frame_rate) +
                          " does not match the scorer's fixed " + std::to_string(FRAME_RATE));

  std::map<std::string, const ManifestRecord*> records;
  for (const auto& rec : manifest.records) records[rec.clip_id] = &rec;

  // group rows by clip
  std::map<std::string, std::vector<const std::tuple<std::string, EventDescriptor,
                                                     std::vector<double>>*>> by_clip;
  for (const auto& row : dump.rows) by_clip[std::get<0>(row)].push_back(&row);

  std::map<std::string, ScoredFrames> pooled;
  std::map<std::string, detail::DerAccumulator> der_acc;  // per attribute
  std::map<std::string, std::map<std::string, detail::DerAccumulator>> der_per_clip;
  long overlap_tp = 0, overlap_fp = 0, overlap_fn = 0;
  std::vector<ReportRecord> per_clip_records;

  for (const auto& [clip_id, rows] : by_clip) {
    auto it = records.find(clip_id);
    if (it == records.end())
      throw ValidationError("dump references clip '" + clip_id + "' absent from the manifest");
    const ManifestRecord& rec = *it->second;

    const int t_frames = static_cast<int>(std::get<2>(*rows.front()).size());
    for (const auto* row : rows)
      if (static_cast<int>(std::get<2>(*row).size()) != t_frames)
        throw ValidationError(clip_id + ": inconsistent posterior lengths in dump");
    const double duration = static_cast<double>(t_frames) / FRAME_RATE;

    SegmentAnnotation ref = read_rttm(manifest.resolve(rec.rttm_path), duration);
    ref.clip_id = clip_id;
    const ActivityMatrix activity = segments_to_activity(ref);

    // hypothesis rows for DER, grouped by attribute
    std::map<std::string, std::vector<std::pair<std::string, std::vector<double>>>> hyp_rows;

    for (const auto* rowp : rows) {
      const auto& [cid, desc, scores] = *rowp;
      const BinaryRow labels =
          detail::reference_row_for(desc, activity, rec.profiles, dump.chunk_seconds);
      ScoredFrames sf;
      sf.scores = scores;
      sf.labels = labels;
      sf.descriptor = desc;
      pooled[attribute_key(desc)].append(sf);
      const std::string vk = value_key(desc);
      if (vk != attribute_key(desc)) pooled[vk].append(sf);

      const auto& spec = desc.spec;
      if (spec.kind == AttributeKind::timestamped_speaker) {
        EventDescriptor bare;
        bare.spec = spec;
        hyp_rows[attribute_key(desc)].emplace_back(
            desc.bound_speaker_id.empty() ? bare.to_string() : desc.bound_speaker_id, scores);
      } else if (spec.kind == AttributeKind::gender) {
        hyp_rows["G"].emplace_back(to_string(spec.gender), scores);
      } else if (spec.kind == AttributeKind::speaker_count &&
                 spec.count_class == CountClass::overlap) {
        const BinaryRow pred = binarize_row(scores, opt.threshold, opt.median_window);
        for (int t = 0; t < t_frames; ++t) {
          if (pred[t] && labels[t]) ++overlap_tp;
          else if (pred[t]) ++overlap_fp;
          else if (labels[t]) ++overlap_fn;
        }
      }
    }

    for (auto& [attr, speaker_rows] : hyp_rows) {
      SegmentAnnotation hyp = posteriors_to_annotation(clip_id, duration, speaker_rows,
                                                       opt.threshold, opt.median_window);
      SegmentAnnotation der_ref = ref;
      if (attr == "G") {
        // gender diarization scores against the gender-projected reference
        const auto g = derive_gender_labels(activity, rec.profiles);
        der_ref.segments.clear();
        for (int gi = 0; gi < 2; ++gi) {
          const std::string name = gi == 0 ? "female" : "male";
          for (const auto& iv : frames_to_segments(g[gi]))
            der_ref.segments.push_back({name, iv.onset, iv.offset});
        }
        if (der_ref.segments.empty()) continue;
      }
      try {
        const DerResult r = der(der_ref, hyp, opt.collar, opt.score_overlap);
        der_acc[attr].add(r);
        if (opt.per_clip) der_per_clip[clip_id][attr].add(r);
      } catch (const ValidationError&) {
        // no scored reference speech in this clip under these options
      }
    }

    if (opt.per_clip) {
      std::map<std::string, ScoredFrames> clip_pool;
      for (const auto* rowp : rows) {
        const auto& [cid, desc, scores] = *rowp;
        ScoredFrames sf;
        sf.scores = scores;
        sf.labels = detail::reference_row_for(desc, activity, rec.profiles, dump.chunk_seconds);
        clip_pool[attribute_key(desc)].append(sf);
      }
      for (const auto& [key, summary] : summarize_pools(clip_pool))
        for (const auto& [metric, value] : summary)
          per_clip_records.push_back({clip_id, key, metric, value, true});
    }
  }

  auto want = [&](const std::string& m) { return opt.metrics.empty() || opt.metrics.count(m); };

  std::vector<ReportRecord> out;
  for (const auto& [key, summary] : summarize_pools(pooled))
    for (const auto& [metric, value] : summary)
      if (want(metric)) out.push_back({opt.dataset, key, metric, value, true});

  for (const auto& [attr, acc] : der_acc) {
    if (!want("der")) continue;
    const DerResult r = acc.total();
    out.push_back({opt.dataset, attr, "der", r.der, true});
    out.push_back({opt.dataset, attr, "miss", r.miss, true});
    out.push_back({opt.dataset, attr, "false_alarm", r.false_alarm, true});
    out.push_back({opt.dataset, attr, "speaker_confusion", r.speaker_confusion, true});
  }
  for (const auto& [clip, attrs] : der_per_clip)
    for (const auto& [attr, acc] : attrs)
      if (want("der")) per_clip_records.push_back({clip, attr, "der", acc.total().der, true});

  if (want("precision") && (overlap_tp + overlap_fp + overlap_fn) > 0) {
    ReportRecord p{opt.dataset, "N:overlap", "precision", 0.0, overlap_tp + overlap_fp > 0};
    if (p.defined) p.value = static_cast<double>(overlap_tp) / (overlap_tp + overlap_fp);
    out.push_back(p);
    ReportRecord r{opt.dataset, "N:overlap", "recall", 0.0, overlap_tp + overlap_fn > 0};
    if (r.defined) r.value = static_cast<double>(overlap_tp) / (overlap_tp + overlap_fn);
    out.push_back(r);
  }

  out.insert(out.end(), per_clip_records.begin(), per_clip_records.end());
  return out;
}

inline void write_report(const std::string& path, const std::vector<ReportRecord>& records) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& r : records) f << report_line(r) << "\n";
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace ptsd
