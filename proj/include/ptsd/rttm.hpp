#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "ptsd/types.hpp"

namespace ptsd {

// RTTM, one line per segment:
//   SPEAKER <clip_id> 1 <onset> <duration> <NA> <NA> <speaker_id> <NA> <NA>
// onset/duration printed to 3 decimal places.

inline std::string rttm_string(const SegmentAnnotation& ann) {
  std::string out;
  char line[256];
  for (const auto& s : ann.segments) {
    std::snprintf(line, sizeof(line), "SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA> <NA>\n",
                  ann.clip_id.c_str(), s.onset, s.offset - s.onset, s.speaker_id.c_str());
    out += line;
  }
  return out;
}

inline void write_rttm(const std::string& path, const SegmentAnnotation& ann) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << rttm_string(ann);
  if (!f) throw std::runtime_error("write failed: " + path);
}

// Duration of the clip is not part of RTTM; callers pass it (0 = use the last
// segment offset).
inline SegmentAnnotation parse_rttm(std::istream& in, const std::string& source,
                                    double duration = 0.0) {
  SegmentAnnotation ann;
  ann.duration = duration;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag, clip, chan, na;
    double onset = 0.0, dur = 0.0;
    std::string speaker;
    if (!(ls >> tag >> clip >> chan >> onset >> dur >> na >> na >> speaker))
      throw ValidationError(source + ":" + std::to_string(line_no) + ": malformed RTTM line");
    if (tag != "SPEAKER") continue;
    ann.clip_id = clip;
    ann.segments.push_back({speaker, onset, onset + dur});
    if (onset + dur > ann.duration) ann.duration = onset + dur;
  }
  return ann;
}

inline SegmentAnnotation read_rttm(const std::string& path, double duration = 0.0) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return parse_rttm(f, path, duration);
}

}  // namespace ptsd
