#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "ptsd/dsp.hpp"
#include "ptsd/labels.hpp"
#include "ptsd/types.hpp"

namespace ptsd {

// Frame scores paired with binary ground truth for one event.
struct ScoredFrames {
  std::vector<double> scores;
  BinaryRow labels;
  EventDescriptor descriptor;

  void append(const ScoredFrames& other) {
    scores.insert(scores.end(), other.scores.begin(), other.scores.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  }

  void check() const {
    if (scores.size() != labels.size())
      throw ValidationError("ScoredFrames: scores and labels differ in length");
  }
};

namespace detail {

// Descending-score threshold groups (ties merged): cumulative (tp, fp) after
// each group.
struct RocPoints {
  std::vector<long> tp, fp;  // cumulative, starts at (0, 0)
  long n_pos = 0, n_neg = 0;
};

inline RocPoints roc_points(const ScoredFrames& sf) {
  sf.check();
  const size_t n = sf.scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return sf.scores[a] > sf.scores[b]; });
  RocPoints pts;
  pts.tp.push_back(0);
  pts.fp.push_back(0);
  long tp = 0, fp = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && sf.scores[order[j]] == sf.scores[order[i]]) {
      if (sf.labels[order[j]]) ++tp;
      else ++fp;
      ++j;
    }
    pts.tp.push_back(tp);
    pts.fp.push_back(fp);
    i = j;
  }
  pts.n_pos = tp;
  pts.n_neg = fp;
  return pts;
}

}  // namespace detail

// Rank-based AP = sum_k (R_k - R_{k-1}) * P_k over descending thresholds,
// ties grouped.
inline double average_precision(const ScoredFrames& sf) {
  const auto pts = detail::roc_points(sf);
  if (pts.n_pos == 0) throw ValidationError("average_precision: no positive labels");
  double ap = 0.0;
  for (size_t k = 1; k < pts.tp.size(); ++k) {
    const double recall = static_cast<double>(pts.tp[k]) / pts.n_pos;
    const double prev_recall = static_cast<double>(pts.tp[k - 1]) / pts.n_pos;
    const double precision = static_cast<double>(pts.tp[k]) / (pts.tp[k] + pts.fp[k]);
    ap += (recall - prev_recall) * precision;
  }
  return ap;
}

// Trapezoidal ROC area; equals the Mann-Whitney statistic with ties counted
// one half.
inline double roc_auc(const ScoredFrames& sf) {
  const auto pts = detail::roc_points(sf);
  if (pts.n_pos == 0 || pts.n_neg == 0)
    throw ValidationError("roc_auc: both classes must be present");
  double auc = 0.0;
  for (size_t k = 1; k < pts.tp.size(); ++k) {
    const double dx = static_cast<double>(pts.fp[k] - pts.fp[k - 1]) / pts.n_neg;
    const double y = static_cast<double>(pts.tp[k] + pts.tp[k - 1]) / (2.0 * pts.n_pos);
    auc += dx * y;
  }
  return auc;
}

// Equal error rate: the point where FPR = FNR on the piecewise-linear ROC,
// interpolated between adjacent threshold points.
inline double eer(const ScoredFrames& sf) {
  const auto pts = detail::roc_points(sf);
  if (pts.n_pos == 0 || pts.n_neg == 0)
    throw ValidationError("eer: both classes must be present");
  double prev_fpr = 0.0, prev_fnr = 1.0;
  for (size_t k = 1; k < pts.tp.size(); ++k) {
    const double fpr = static_cast<double>(pts.fp[k]) / pts.n_neg;
    const double fnr = 1.0 - static_cast<double>(pts.tp[k]) / pts.n_pos;
    if (fpr >= fnr) {
      const double g0 = prev_fpr - prev_fnr;  // <= 0
      const double g1 = fpr - fnr;            // >= 0
      const double alpha = (g1 - g0) > 0.0 ? -g0 / (g1 - g0) : 0.0;
      return prev_fpr + alpha * (fpr - prev_fpr);
    }
    prev_fpr = fpr;
    prev_fnr = fnr;
  }
  return 1.0;  // unreachable for well-formed inputs
}

struct PrecisionRecall {
  std::optional<double> precision;  // undefined when no positive predictions
  std::optional<double> recall;     // undefined when no positive labels
};

inline PrecisionRecall osd_precision_recall(const BinaryRow& prediction, const BinaryRow& labels) {
  if (prediction.size() != labels.size())
    throw ValidationError("osd_precision_recall: length mismatch");
  long tp = 0, fp = 0, fn = 0;
  for (size_t t = 0; t < labels.size(); ++t) {
    if (prediction[t] && labels[t]) ++tp;
    else if (prediction[t]) ++fp;
    else if (labels[t]) ++fn;
  }
  PrecisionRecall pr;
  if (tp + fp > 0) pr.precision = static_cast<double>(tp) / (tp + fp);
  if (tp + fn > 0) pr.recall = static_cast<double>(tp) / (tp + fn);
  return pr;
}

// ---------------------------------------------------------------------------
// DER
// ---------------------------------------------------------------------------

struct DerResult {
  double der = 0.0;
  double miss = 0.0;
  double false_alarm = 0.0;
  double speaker_confusion = 0.0;
  double reference_seconds = 0.0;
};

namespace detail {

constexpr double BIG = std::numeric_limits<double>::infinity();

// Min-cost assignment with potentials; cost is n x m with n <= m. Returns,
// for each row, the assigned column.
inline std::vector<int> assignment_min_cost(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = static_cast<int>(cost[0].size());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, BIG);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = BIG;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Maximize total weight over injective row->col mappings.
inline std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& w) {
  const int n = static_cast<int>(w.size());
  if (n == 0) return {};
  const int m = static_cast<int>(w[0].size());
  if (m == 0) return std::vector<int>(n, -1);
  if (n <= m) {
    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) cost[i][j] = -w[i][j];
    return assignment_min_cost(cost);
  }
  // transpose, solve, invert
  std::vector<std::vector<double>> cost(m, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) cost[j][i] = -w[i][j];
  const auto col_to_row = assignment_min_cost(cost);
  std::vector<int> row_to_col(n, -1);
  for (int j = 0; j < m; ++j)
    if (col_to_row[j] >= 0) row_to_col[col_to_row[j]] = j;
  return row_to_col;
}

}  // namespace detail

// Frame-based DER on a 100 frames/s internal grid. The collar excises
// +-collar seconds around every reference boundary; score_overlap = false
// additionally excludes frames where the reference has two or more active
// speakers. The reference-to-hypothesis speaker mapping maximizes matched
// speech time (computed on scored frames).
inline DerResult der(const SegmentAnnotation& reference, const SegmentAnnotation& hypothesis,
                     double collar = 0.25, bool score_overlap = true) {
  constexpr int GRID = 100;
  reference.validate();
  if (std::abs(reference.duration - hypothesis.duration) > 0.05)
    throw ValidationError("der: reference and hypothesis clip durations differ");
  const double duration = reference.duration;
  const int n = static_cast<int>(std::ceil(duration * GRID - 1e-9));

  const auto ref_ids = reference.speaker_ids();
  const auto hyp_ids = hypothesis.speaker_ids();
  const int R = static_cast<int>(ref_ids.size());
  const int H = static_cast<int>(hyp_ids.size());

  auto rasterize = [&](const SegmentAnnotation& ann, const std::vector<std::string>& ids) {
    std::vector<std::vector<uint8_t>> act(ids.size(), std::vector<uint8_t>(n, 0));
    for (const auto& seg : ann.segments) {
      const int row = static_cast<int>(
          std::lower_bound(ids.begin(), ids.end(), seg.speaker_id) - ids.begin());
      for (int t = 0; t < n; ++t) {
        const double c = (t + 0.5) / GRID;
        if (seg.onset <= c && c < seg.offset) act[row][t] = 1;
      }
    }
    return act;
  };
  const auto ref_act = rasterize(reference, ref_ids);
  const auto hyp_act = rasterize(hypothesis, hyp_ids);

  std::vector<uint8_t> scored(n, 1);
  if (collar > 0.0) {
    for (const auto& seg : reference.segments) {
      for (double b : {seg.onset, seg.offset}) {
        const int lo = std::max(0, static_cast<int>(std::floor((b - collar) * GRID - 0.5)));
        const int hi = std::min(n - 1, static_cast<int>(std::ceil((b + collar) * GRID)));
        for (int t = lo; t <= hi; ++t)
          if (std::abs((t + 0.5) / GRID - b) <= collar + 1e-12) scored[t] = 0;
      }
    }
  }
  if (!score_overlap) {
    for (int t = 0; t < n; ++t) {
      int nr = 0;
      for (int s = 0; s < R; ++s) nr += ref_act[s][t];
      if (nr >= 2) scored[t] = 0;
    }
  }

  // optimal mapping by matched speech time on scored frames
  std::vector<int> ref_to_hyp(R, -1);
  if (R > 0 && H > 0) {
    std::vector<std::vector<double>> w(R, std::vector<double>(H, 0.0));
    for (int t = 0; t < n; ++t) {
      if (!scored[t]) continue;
      for (int s = 0; s < R; ++s) {
        if (!ref_act[s][t]) continue;
        for (int h = 0; h < H; ++h)
          if (hyp_act[h][t]) w[s][h] += 1.0;
      }
    }
    ref_to_hyp = detail::max_weight_assignment(w);
  }

  long miss = 0, fa = 0, conf = 0, ref_time = 0;
  for (int t = 0; t < n; ++t) {
    if (!scored[t]) continue;
    int nr = 0, nh = 0, ncorrect = 0;
    for (int s = 0; s < R; ++s) nr += ref_act[s][t];
    for (int h = 0; h < H; ++h) nh += hyp_act[h][t];
    for (int s = 0; s < R; ++s)
      if (ref_act[s][t] && ref_to_hyp[s] >= 0 && hyp_act[ref_to_hyp[s]][t]) ++ncorrect;
    ref_time += nr;
    miss += std::max(0, nr - nh);
    fa += std::max(0, nh - nr);
    conf += std::min(nr, nh) - ncorrect;
  }
  if (ref_time == 0) throw ValidationError("der: reference contains no scored speech");

  DerResult out;
  out.reference_seconds = static_cast<double>(ref_time) / GRID;
  out.miss = static_cast<double>(miss) / ref_time;
  out.false_alarm = static_cast<double>(fa) / ref_time;
  out.speaker_confusion = static_cast<double>(conf) / ref_time;
  out.der = out.miss + out.false_alarm + out.speaker_confusion;
  return out;
}

// ---------------------------------------------------------------------------
// Posterior binarization
// ---------------------------------------------------------------------------

inline BinaryRow binarize_row(const std::vector<double>& posteriors, double threshold = 0.5,
                              int median_window = 11) {
  BinaryRow row(posteriors.size());
  for (size_t t = 0; t < posteriors.size(); ++t) row[t] = posteriors[t] > threshold ? 1 : 0;
  return median_filter(row, median_window);
}

// Binarizes named posterior rows into a hypothesis annotation.
inline SegmentAnnotation posteriors_to_annotation(
    const std::string& clip_id, double duration,
    const std::vector<std::pair<std::string, std::vector<double>>>& speaker_rows,
    double threshold = 0.5, int median_window = 11, double min_duration = 0.0) {
  SegmentAnnotation ann;
  ann.clip_id = clip_id;
  ann.duration = duration;
  for (const auto& [speaker, post] : speaker_rows) {
    const BinaryRow row = binarize_row(post, threshold, median_window);
    for (const auto& iv : frames_to_segments(row, FRAME_RATE, min_duration))
      ann.segments.push_back({speaker, iv.onset, std::min(iv.offset, duration)});
  }
  return ann;
}

}  // namespace ptsd
