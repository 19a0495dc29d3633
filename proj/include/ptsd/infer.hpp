#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ptsd/baselines.hpp"
#include "ptsd/labels.hpp"
#include "ptsd/model.hpp"
#include "ptsd/train.hpp"

namespace ptsd {

// ---------------------------------------------------------------------------
// Chunked inference: non-overlapping chunks (default 40 s), final remainder
// processed as-is, posteriors concatenated. Timestamped anchors are
// re-resolved per chunk: the anchor's own chunk uses it directly, other
// chunks re-anchor inside the speaker's solo regions from the reference
// activity (error when a chunk offers none).
// ---------------------------------------------------------------------------

template <typename Real>
PosteriorSet chunked_infer(Model<Real>& model, const Mat<Real>& raw_full,
                           const std::vector<PromptSpec>& specs, double chunk_seconds = 40.0,
                           const ActivityMatrix* reference = nullptr) {
  if (specs.empty()) throw ValidationError("chunked_infer: at least one prompt required");
  const int t_full = static_cast<int>(raw_full.rows());
  const int chunk_frames =
      std::max(1, static_cast<int>(std::lround(chunk_seconds * FRAME_RATE)));

  // bind each timestamped prompt to its reference speaker row once
  std::vector<int> anchor_speaker(specs.size(), -1);
  for (size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    if (spec.kind != AttributeKind::timestamped_speaker) continue;
    if (spec.anchor_frame < 0 || spec.anchor_frame >= t_full)
      throw ValidationError("timestamped anchor frame " + std::to_string(spec.anchor_frame) +
                            " outside the clip");
    if (reference) {
      int hit = -1;
      for (size_t s = 0; s < reference->rows.size(); ++s) {
        if (reference->rows[s][spec.anchor_frame]) {
          if (hit >= 0) throw ValidationError("timestamped anchor lies in overlapped speech");
          hit = static_cast<int>(s);
        }
      }
      if (hit < 0) throw ValidationError("timestamped anchor lies in non-speech");
      anchor_speaker[i] = hit;
    }
  }

  PosteriorSet out;
  out.rows.resize(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) {
    out.rows[i].first.spec = specs[i];
    if (anchor_speaker[i] >= 0)
      out.rows[i].first.bound_speaker_id = reference->speakers[anchor_speaker[i]];
  }

  for (int begin = 0; begin < t_full; begin += chunk_frames) {
    const int len = std::min(chunk_frames, t_full - begin);
    std::vector<PromptSpec> local = specs;
    for (size_t i = 0; i < local.size(); ++i) {
      if (local[i].kind != AttributeKind::timestamped_speaker) continue;
      const int a = local[i].anchor_frame;
      if (a >= begin && a < begin + len) {
        local[i].anchor_frame = a - begin;
        continue;
      }
      if (!reference)
        throw ValidationError(
            "timestamped anchor falls outside a chunk and no reference solo regions were "
            "provided for re-anchoring");
      // re-anchor at the middle solo frame of the bound speaker in this chunk
      const int s = anchor_speaker[i];
      std::vector<int> solo;
      for (int t = begin; t < begin + len; ++t)
        if (reference->rows[s][t] && reference->active_count(t) == 1) solo.push_back(t - begin);
      if (solo.empty())
        throw ValidationError("speaker " + reference->speakers[s] + " has no solo region in chunk at frame " +
                              std::to_string(begin) + "; cannot re-anchor timestamped prompt");
      local[i].anchor_frame = solo[solo.size() / 2];
    }

    const PosteriorSet part = model.forward(Mat<Real>(raw_full.middleRows(begin, len)), local);
    for (size_t i = 0; i < specs.size(); ++i) {
      auto& row = out.rows[i].second;
      row.insert(row.end(), part.rows[i].second.begin(), part.rows[i].second.end());
    }
  }
  return out;
}

// Chunked wrappers for the baseline systems: enrollments are global per clip,
// so chunking is a plain split-forward-concatenate.
template <typename Real>
PosteriorSet chunked_tsvad(Model<Real>& model, const Mat<Real>& raw_full,
                           const std::vector<std::pair<std::string, Mat<Real>>>& enrollments,
                           double chunk_seconds = 40.0) {
  const int t_full = static_cast<int>(raw_full.rows());
  const int chunk_frames =
      std::max(1, static_cast<int>(std::lround(chunk_seconds * FRAME_RATE)));
  PosteriorSet out;
  for (int begin = 0; begin < t_full; begin += chunk_frames) {
    const int len = std::min(chunk_frames, t_full - begin);
    PosteriorSet part = tsvad_forward(model, Mat<Real>(raw_full.middleRows(begin, len)),
                                      enrollments);
    if (out.rows.empty()) {
      out = std::move(part);
    } else {
      for (size_t i = 0; i < out.rows.size(); ++i)
        out.rows[i].second.insert(out.rows[i].second.end(), part.rows[i].second.begin(),
                                  part.rows[i].second.end());
    }
  }
  return out;
}

template <typename Real>
PosteriorSet chunked_gender(Model<Real>& model, const Mat<Real>& raw_full,
                            double chunk_seconds = 40.0) {
  const int t_full = static_cast<int>(raw_full.rows());
  const int chunk_frames =
      std::max(1, static_cast<int>(std::lround(chunk_seconds * FRAME_RATE)));
  PosteriorSet out;
  for (int begin = 0; begin < t_full; begin += chunk_frames) {
    const int len = std::min(chunk_frames, t_full - begin);
    PosteriorSet part = gender_baseline_forward(model, Mat<Real>(raw_full.middleRows(begin, len)));
    if (out.rows.empty()) {
      out = std::move(part);
    } else {
      for (size_t i = 0; i < out.rows.size(); ++i)
        out.rows[i].second.insert(out.rows[i].second.end(), part.rows[i].second.begin(),
                                  part.rows[i].second.end());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score dump: header line, then one row per (clip, event):
//   <clip_id> <descriptor> <p0> <p1> ... (6 decimal places)
// ---------------------------------------------------------------------------

struct ScoreDump {
  int frame_rate = FRAME_RATE;
  double chunk_seconds = 40.0;
  std::string config_hash;
  std::vector<std::tuple<std::string, EventDescriptor, std::vector<double>>> rows;
};

inline void write_score_dump(const std::string& path, const ScoreDump& dump) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "# ptsd-scores v1 frame_rate=" << dump.frame_rate << " chunk_seconds=" << dump.chunk_seconds
    << " config=" << (dump.config_hash.empty() ? "none" : dump.config_hash) << "\n";
  char num[16];
  for (const auto& [clip_id, desc, values] : dump.rows) {
    f << clip_id << " " << desc.to_string();
    for (double v : values) {
      std::snprintf(num, sizeof(num), " %.6f", v);
      f << num;
    }
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline ScoreDump read_score_dump(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  ScoreDump dump;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string tok;
      while (hs >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "frame_rate") dump.frame_rate = std::stoi(val);
        else if (key == "chunk_seconds") dump.chunk_seconds = std::stod(val);
        else if (key == "config") dump.config_hash = val == "none" ? "" : val;
      }
      have_header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string clip_id, desc_text;
    if (!(ls >> clip_id >> desc_text))
      throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed score row");
    EventDescriptor desc = EventDescriptor::parse(desc_text);
    std::vector<double> values;
    double v;
    while (ls >> v) values.push_back(v);
    if (values.empty())
      throw ValidationError(path + ":" + std::to_string(line_no) + ": score row has no values");
    dump.rows.emplace_back(clip_id, desc, std::move(values));
  }
  if (!have_header) throw ValidationError(path + ": missing score-dump header line");
  return dump;
}

}  // namespace ptsd
