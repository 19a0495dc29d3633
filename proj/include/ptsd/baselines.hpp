#pragma once

#include <string>
#include <vector>

#include "ptsd/labels.hpp"
#include "ptsd/model.hpp"

namespace ptsd {

// Comparison systems sharing the frontend/encoder/metrics with the main
// model: enrollment-conditioned target-speaker VAD and two frame-wise gender
// classifiers.

struct EnrollmentSpec {
  std::string clip_id;
  double onset = 0.0;
  double offset = 0.0;
  std::string speaker_id;
};

// Posterior rows for enrolled speakers carry an "E@<speaker>" descriptor
// (anchor_frame < 0 marks the enrollment flavor of the timestamp attribute).
inline EventDescriptor enrollment_descriptor(const std::string& speaker_id) {
  EventDescriptor d;
  d.spec.kind = AttributeKind::timestamped_speaker;
  d.spec.anchor_frame = -1;
  d.bound_speaker_id = speaker_id;
  return d;
}

// Frontend features over the enrollment segment, mean-pooled over time, then
// a trainable projection to D.
template <typename Real>
nn::Var<Real> enrollment_embedding_graph(Model<Real>& model, nn::Tape<Real>& tape,
                                         const Mat<Real>& raw_segment_features) {
  if (raw_segment_features.rows() < 1)
    throw ValidationError("enrollment segment shorter than one frame");
  auto feats = model.features_graph(tape, raw_segment_features);
  auto pooled = tape.mean_rows(feats);
  auto w = tape.leaf(model.params().get("spk.proj.w"));
  auto b = tape.leaf(model.params().get("spk.proj.b"));
  return tape.add_rowvec(tape.matmul(pooled, w), b);
}

// Inference-mode embedding for one segment of a clip's raw feature matrix.
template <typename Real>
Mat<Real> enrollment_embedding(Model<Real>& model, const Mat<Real>& raw_clip_features,
                               double onset, double offset) {
  const int begin = time_to_frame(onset);
  const int end = time_to_frame(offset);
  if (end <= begin || begin < 0 || end > raw_clip_features.rows())
    throw ValidationError("enrollment segment [" + std::to_string(onset) + ", " +
                          std::to_string(offset) + ") maps to no frames");
  nn::Tape<Real> tape(false, nullptr, false);
  Mat<Real> seg = raw_clip_features.middleRows(begin, end - begin);
  return enrollment_embedding_graph(model, tape, seg)->value;
}

// TS-VAD graph: identical to the PTSD pipeline except the queries are
// enrollment embeddings instead of timestamp rows or table lookups.
template <typename Real>
nn::Var<Real> tsvad_posteriors_graph(Model<Real>& model, nn::Tape<Real>& tape,
                                     const Mat<Real>& raw_chunk_features,
                                     const std::vector<Mat<Real>>& raw_enrollment_features) {
  if (model.config().kind != ModelKind::tsvad)
    throw ValidationError("tsvad forward requires a tsvad-kind model");
  if (raw_enrollment_features.empty())
    throw ValidationError("tsvad forward requires at least one enrollment");
  auto f_a = model.features_graph(tape, raw_chunk_features);
  auto f_enc = model.encode_graph(tape, f_a);
  std::vector<nn::Var<Real>> rows;
  for (const auto& seg : raw_enrollment_features)
    rows.push_back(enrollment_embedding_graph(model, tape, seg));
  auto prompts = tape.vstack(rows);
  auto f_dec = model.decode_graph(tape, prompts, f_enc);
  return model.score_graph(tape, f_dec, f_enc);
}

// One posterior row per enrolled speaker, in enrollment order.
template <typename Real>
PosteriorSet tsvad_forward(Model<Real>& model, const Mat<Real>& raw_chunk_features,
                           const std::vector<std::pair<std::string, Mat<Real>>>& enrollments) {
  nn::Tape<Real> tape(false, nullptr, false);
  std::vector<Mat<Real>> segs;
  for (const auto& [id, seg] : enrollments) segs.push_back(seg);
  auto post = tsvad_posteriors_graph(model, tape, raw_chunk_features, segs);
  PosteriorSet out;
  for (size_t r = 0; r < enrollments.size(); ++r) {
    std::vector<double> row(post->value.cols());
    for (Eigen::Index t = 0; t < post->value.cols(); ++t)
      row[t] = static_cast<double>(post->value(static_cast<Eigen::Index>(r), t));
    out.rows.emplace_back(enrollment_descriptor(enrollments[r].first), std::move(row));
  }
  return out;
}

// Gender baselines: 2 x T posteriors (female, male), no prompts involved.
// baseline1 = dilated temporal conv stack; baseline2 = the shared transformer
// encoder; both end in a per-frame linear head with sigmoid.
template <typename Real>
nn::Var<Real> gender_posteriors_graph(Model<Real>& model, nn::Tape<Real>& tape,
                                      const Mat<Real>& raw_features) {
  const ModelKind kind = model.config().kind;
  if (kind != ModelKind::baseline1 && kind != ModelKind::baseline2)
    throw ValidationError("gender baseline forward requires a baseline-kind model");
  auto& store = model.params();
  auto x = model.features_graph(tape, raw_features);
  if (kind == ModelKind::baseline2) {
    x = model.encode_graph(tape, x);
  } else {
    const int dilations[3] = {1, 2, 4};
    for (int bkt = 0; bkt < 3; ++bkt) {
      const std::string pre = "conv." + std::to_string(bkt);
      auto h = tape.layer_norm(x, tape.leaf(store.get(pre + ".ln.g")),
                               tape.leaf(store.get(pre + ".ln.b")));
      nn::Var<Real> y;
      for (int k = 0; k < 3; ++k) {
        auto shifted = tape.shift_rows(h, (k - 1) * dilations[bkt]);
        auto term = tape.matmul(shifted, tape.leaf(store.get(pre + ".w" + std::to_string(k))));
        y = k == 0 ? term : tape.add(y, term);
      }
      y = tape.add_rowvec(y, tape.leaf(store.get(pre + ".b")));
      y = tape.relu(y);
      x = tape.add(x, tape.dropout(y, model.config().dropout));
    }
  }
  auto logits = tape.add_rowvec(tape.matmul(x, tape.leaf(store.get("head.w"))),
                                tape.leaf(store.get("head.b")));
  auto clamped = tape.clamp(logits, -posterior_logit_clamp<Real>(),
                            posterior_logit_clamp<Real>());
  return tape.transpose(tape.sigmoid(clamped));  // 2 x T
}

template <typename Real>
PosteriorSet gender_baseline_forward(Model<Real>& model, const Mat<Real>& raw_features) {
  nn::Tape<Real> tape(false, nullptr, false);
  auto post = gender_posteriors_graph(model, tape, raw_features);
  std::vector<PromptSpec> specs = {PromptSpec::of_gender(Gender::female),
                                   PromptSpec::of_gender(Gender::male)};
  return Model<Real>::to_posterior_set(post->value, specs);
}

}  // namespace ptsd
