#pragma once

#include <string>
#include <vector>

#include "ptsd/frontend.hpp"
#include "ptsd/nn/params.hpp"
#include "ptsd/nn/tape.hpp"
#include "ptsd/types.hpp"

namespace ptsd {

enum class QueryInteraction { joint, independent };

inline const char* to_string(QueryInteraction q) {
  return q == QueryInteraction::joint ? "joint" : "independent";
}

inline QueryInteraction query_interaction_from_string(const std::string& s) {
  if (s == "joint") return QueryInteraction::joint;
  if (s == "independent") return QueryInteraction::independent;
  throw ValidationError("unknown query_interaction: '" + s + "'");
}

// ptsd      — prompt-query model (timestamp rows / learnable embeddings)
// tsvad     — same backbone, prompts are enrollment speaker embeddings
// baseline1 — frame-wise gender classifier on a dilated-conv stack
// baseline2 — frame-wise gender classifier on the transformer encoder
enum class ModelKind { ptsd, tsvad, baseline1, baseline2 };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ptsd: return "ptsd";
    case ModelKind::tsvad: return "tsvad";
    case ModelKind::baseline1: return "baseline1";
    default: return "baseline2";
  }
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "ptsd") return ModelKind::ptsd;
  if (s == "tsvad") return ModelKind::tsvad;
  if (s == "baseline1") return ModelKind::baseline1;
  if (s == "baseline2") return ModelKind::baseline2;
  throw ValidationError("unknown model kind: '" + s + "'");
}

struct ModelConfig {
  int d_model = 256;
  int n_heads = 8;
  int n_encoder_layers = 4;
  int n_decoder_layers = 4;
  int ff_multiple = 4;
  double dropout = 0.1;
  QueryInteraction query_interaction = QueryInteraction::joint;
  ModelKind kind = ModelKind::ptsd;
  FrontendConfig frontend;

  void validate() const {
    if (d_model <= 0 || d_model % n_heads != 0)
      throw ValidationError("d_model must be positive and divisible by n_heads");
    if (frontend.d_model != d_model)
      throw ValidationError("frontend.d_model must match model d_model");
  }
};

// Row index of a categorical prompt in the 6-row embedding table.
inline int embedding_row(const PromptSpec& spec) {
  switch (spec.kind) {
    case AttributeKind::gender:
      return spec.gender == Gender::female ? 0 : 1;
    case AttributeKind::speaker_count:
      return 2 + static_cast<int>(spec.count_class);
    case AttributeKind::keynote:
      return 5;
    default:
      return -1;
  }
}

constexpr int PROMPT_TABLE_ROWS = 6;

// Keeps posteriors strictly inside (0,1): sigmoid saturates to exactly 1.0
// beyond |logit| ~ 36 in double and ~ 16 in float.
template <typename Real>
constexpr Real posterior_logit_clamp() {
  return sizeof(Real) == 8 ? Real(30) : Real(15);
}

// Per-prompt posterior sequences d in (0,1)^T, order matching the request.
struct PosteriorSet {
  int frame_rate = FRAME_RATE;
  std::vector<std::pair<EventDescriptor, std::vector<double>>> rows;
};

// Mean binary cross-entropy, averaged over frames per event and then over
// events; probabilities clamped to [1e-7, 1-1e-7] before the logs.
inline double bce_loss(const PosteriorSet& posteriors, const FrameLabelSet& labels) {
  if (posteriors.rows.size() != labels.rows.size())
    throw ValidationError("bce_loss: posterior/label row counts differ");
  constexpr double eps = 1e-7;
  double total = 0.0;
  for (size_t r = 0; r < posteriors.rows.size(); ++r) {
    const auto& [pdesc, pvals] = posteriors.rows[r];
    const auto& [ldesc, lvals] = labels.rows[r];
    if (!(pdesc.spec == ldesc.spec))
      throw ValidationError("bce_loss: descriptor mismatch at row " + std::to_string(r) + " (" +
                            pdesc.to_string() + " vs " + ldesc.to_string() + ")");
    if (pvals.size() != lvals.size()) throw ValidationError("bce_loss: frame count mismatch");
    double acc = 0.0;
    for (size_t t = 0; t < pvals.size(); ++t) {
      const double d = std::min(std::max(pvals[t], eps), 1.0 - eps);
      acc -= lvals[t] ? std::log(d) : std::log(1.0 - d);
    }
    total += acc / static_cast<double>(pvals.size());
  }
  return total / static_cast<double>(posteriors.rows.size());
}

template <typename Real>
Mat<Real> sinusoidal_positions(int t_frames, int d_model) {
  Mat<Real> pos(t_frames, d_model);
  for (int t = 0; t < t_frames; ++t) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle = t / std::pow(10000.0, static_cast<double>(i) / d_model);
      pos(t, i) = static_cast<Real>(std::sin(angle));
      if (i + 1 < d_model) pos(t, i + 1) = static_cast<Real>(std::cos(angle));
    }
  }
  return pos;
}

template <typename Real>
class Model {
 public:
  using Var = nn::Var<Real>;
  using Tape = nn::Tape<Real>;

  Model(ModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng = Rng::substream(init_seed, 0x70d31ULL);
    const int d = cfg_.d_model;
    const int raw = cfg_.frontend.raw_width();

    store_.xavier("frontend.proj.w", raw, d, rng);
    store_.zeros("frontend.proj.b", 1, d);

    if (cfg_.kind == ModelKind::ptsd) store_.xavier("prompt.table", PROMPT_TABLE_ROWS, d, rng);
    if (cfg_.kind == ModelKind::tsvad) {
      store_.xavier("spk.proj.w", d, d, rng);
      store_.zeros("spk.proj.b", 1, d);
    }

    if (cfg_.kind != ModelKind::baseline1) {
      for (int l = 0; l < cfg_.n_encoder_layers; ++l)
        make_attention_block("enc." + std::to_string(l), rng, /*with_cross=*/false);
      store_.ones("enc.final_ln.g", 1, d);
      store_.zeros("enc.final_ln.b", 1, d);
    }

    if (cfg_.kind == ModelKind::ptsd || cfg_.kind == ModelKind::tsvad) {
      for (int l = 0; l < cfg_.n_decoder_layers; ++l)
        make_attention_block("dec." + std::to_string(l), rng, /*with_cross=*/true);
      store_.ones("dec.final_ln.g", 1, d);
      store_.zeros("dec.final_ln.b", 1, d);
    }

    if (cfg_.kind == ModelKind::baseline1) {
      for (int b = 0; b < 3; ++b) {
        const std::string pre = "conv." + std::to_string(b);
        for (int k = 0; k < 3; ++k) store_.xavier(pre + ".w" + std::to_string(k), d, d, rng);
        store_.zeros(pre + ".b", 1, d);
        store_.ones(pre + ".ln.g", 1, d);
        store_.zeros(pre + ".ln.b", 1, d);
      }
    }
    if (cfg_.kind == ModelKind::baseline1 || cfg_.kind == ModelKind::baseline2) {
      store_.xavier("head.w", d, 2, rng);
      store_.zeros("head.b", 1, 2);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<Real>& params() { return store_; }
  const nn::ParamStore<Real>& params() const { return store_; }

  // ---- graph builders -----------------------------------------------------

  // Trainable linear map raw features -> D; this is F_a.
  Var features_graph(Tape& tape, const Mat<Real>& raw_features) {
    auto raw = tape.constant(raw_features);
    auto w = tape.leaf(store_.get("frontend.proj.w"));
    auto b = tape.leaf(store_.get("frontend.proj.b"));
    return tape.add_rowvec(tape.matmul(raw, w), b);
  }

  // Positional encoding + self-attention stack; shape preserved.
  Var encode_graph(Tape& tape, Var f_a) {
    const int t_frames = static_cast<int>(f_a->value.rows());
    auto x = tape.add(f_a, tape.constant(sinusoidal_positions<Real>(t_frames, cfg_.d_model)));
    for (int l = 0; l < cfg_.n_encoder_layers; ++l) {
      const std::string pre = "enc." + std::to_string(l);
      x = attention_sublayer(tape, pre + ".self", x, x, /*order_invariant=*/false);
      x = ff_sublayer(tape, pre, x);
    }
    return tape.layer_norm(x, tape.leaf(store_.get("enc.final_ln.g")),
                           tape.leaf(store_.get("enc.final_ln.b")));
  }

  // Prompt matrix in request order: timestamped prompts copy rows of F_a,
  // categorical prompts look up the embedding table.
  Var prompt_matrix_graph(Tape& tape, Var f_a, const std::vector<PromptSpec>& specs) {
    if (specs.empty()) throw ValidationError("at least one prompt is required");
    if (cfg_.kind != ModelKind::ptsd)
      throw ValidationError("prompt resolution requires a ptsd-kind model");
    std::vector<Var> rows;
    auto table = tape.leaf(store_.get("prompt.table"));
    for (const auto& spec : specs) {
      if (spec.kind == AttributeKind::timestamped_speaker) {
        if (spec.anchor_frame < 0 || spec.anchor_frame >= f_a->value.rows())
          throw ValidationError("timestamped prompt anchor frame " +
                                std::to_string(spec.anchor_frame) + " out of range [0, " +
                                std::to_string(f_a->value.rows()) + ")");
        rows.push_back(tape.select_rows(f_a, {spec.anchor_frame}));
      } else {
        rows.push_back(tape.select_rows(table, {embedding_row(spec)}));
      }
    }
    return tape.vstack(rows);
  }

  // Decoder: query self-attention (joint mode only), cross-attention to the
  // encoder output, feed-forward. No positional encoding on queries.
  Var decode_graph(Tape& tape, Var prompts, Var f_enc) {
    if (prompts->value.rows() < 1) throw ValidationError("decode: need at least one query");
    auto x = prompts;
    for (int l = 0; l < cfg_.n_decoder_layers; ++l) {
      const std::string pre = "dec." + std::to_string(l);
      if (cfg_.query_interaction == QueryInteraction::joint)
        x = attention_sublayer(tape, pre + ".self", x, x, /*order_invariant=*/true,
                               /*row_stable=*/true);
      // order-invariant + row-stable: each query row's bits depend only on
      // the query set as a multiset, never on row position or count
      x = attention_sublayer(tape, pre + ".cross", x, f_enc, /*order_invariant=*/true,
                             /*row_stable=*/true);
      x = ff_sublayer(tape, pre, x, /*row_stable=*/true);
    }
    return tape.layer_norm(x, tape.leaf(store_.get("dec.final_ln.g")),
                           tape.leaf(store_.get("dec.final_ln.b")));
  }

  // d^p_t = sigmoid(<decoder row, encoder row t>), clamped strictly inside
  // (0,1).
  Var score_graph(Tape& tape, Var f_dec, Var f_enc) {
    if (f_dec->value.cols() != f_enc->value.cols())
      throw ValidationError("score: width mismatch");
    auto logits = tape.matmul_nt(f_dec, f_enc, /*row_stable=*/true);
    return tape.sigmoid(tape.clamp(logits, -posterior_logit_clamp<Real>(),
                                   posterior_logit_clamp<Real>()));
  }

  // Full PTSD pipeline from raw (un-projected) frontend features.
  Var posteriors_graph(Tape& tape, const Mat<Real>& raw_features,
                       const std::vector<PromptSpec>& specs) {
    auto f_a = features_graph(tape, raw_features);
    auto f_enc = encode_graph(tape, f_a);
    auto prompts = prompt_matrix_graph(tape, f_a, specs);
    auto f_dec = decode_graph(tape, prompts, f_enc);
    return score_graph(tape, f_dec, f_enc);
  }

  // ---- inference wrappers -------------------------------------------------

  // F_a for a clip (projection applied), inference mode.
  Mat<Real> extract_features(const AudioClip& audio) {
    Tape tape(false, nullptr, /*grad_enabled=*/false);
    return features_graph(tape, raw_frontend_features<Real>(audio, cfg_.frontend))->value;
  }

  // The resolved 1 x D prompt vector for one spec.
  Mat<Real> resolve_prompt(const PromptSpec& spec, const Mat<Real>& f_a) {
    if (spec.kind == AttributeKind::timestamped_speaker) {
      if (spec.anchor_frame < 0 || spec.anchor_frame >= f_a.rows())
        throw ValidationError("timestamped prompt anchor frame " +
                              std::to_string(spec.anchor_frame) + " out of range [0, " +
                              std::to_string(f_a.rows()) + ")");
      return f_a.row(spec.anchor_frame);
    }
    return store_.get("prompt.table").value.row(embedding_row(spec));
  }

  PosteriorSet forward(const Mat<Real>& raw_features, const std::vector<PromptSpec>& specs) {
    Tape tape(false, nullptr, /*grad_enabled=*/false);
    auto post = posteriors_graph(tape, raw_features, specs);
    return to_posterior_set(post->value, specs);
  }

  PosteriorSet forward(const AudioClip& audio, const std::vector<PromptSpec>& specs) {
    return forward(raw_frontend_features<Real>(audio, cfg_.frontend), specs);
  }

  static PosteriorSet to_posterior_set(const Mat<Real>& values,
                                       const std::vector<PromptSpec>& specs) {
    PosteriorSet out;
    for (size_t r = 0; r < specs.size(); ++r) {
      EventDescriptor d;
      d.spec = specs[r];
      std::vector<double> row(values.cols());
      for (Eigen::Index t = 0; t < values.cols(); ++t)
        row[t] = static_cast<double>(values(static_cast<Eigen::Index>(r), t));
      out.rows.emplace_back(d, std::move(row));
    }
    return out;
  }

  // ---- shared sublayers ---------------------------------------------------

  Var attention_sublayer(Tape& tape, const std::string& pre, Var x, Var memory,
                         bool order_invariant, bool row_stable = false) {
    auto h = tape.layer_norm(x, tape.leaf(store_.get(pre + ".ln.g")),
                             tape.leaf(store_.get(pre + ".ln.b")));
    auto hm = memory == x ? h : memory;  // pre-norm; encoder memory is already normed
    const bool kv_stable = row_stable && memory == x;
    auto q = proj(tape, pre + ".wq", pre + ".bq", h, row_stable);
    auto k = proj(tape, pre + ".wk", pre + ".bk", hm, kv_stable);
    auto v = proj(tape, pre + ".wv", pre + ".bv", hm, kv_stable);
    auto a = tape.attend(q, k, v, cfg_.n_heads, order_invariant);
    auto o = proj(tape, pre + ".wo", pre + ".bo", a, row_stable);
    return tape.add(x, tape.dropout(o, cfg_.dropout));
  }

  Var ff_sublayer(Tape& tape, const std::string& pre, Var x, bool row_stable = false) {
    auto h = tape.layer_norm(x, tape.leaf(store_.get(pre + ".ff.ln.g")),
                             tape.leaf(store_.get(pre + ".ff.ln.b")));
    auto f = proj(tape, pre + ".ff.w1", pre + ".ff.b1", h, row_stable);
    f = tape.relu(f);
    f = proj(tape, pre + ".ff.w2", pre + ".ff.b2", f, row_stable);
    return tape.add(x, tape.dropout(f, cfg_.dropout));
  }

 private:
  Var proj(Tape& tape, const std::string& wname, const std::string& bname, Var x,
           bool row_stable = false) {
    return tape.add_rowvec(tape.matmul(x, tape.leaf(store_.get(wname)), row_stable),
                           tape.leaf(store_.get(bname)));
  }

  void make_attention_block(const std::string& pre, Rng& rng, bool with_cross) {
    const int d = cfg_.d_model;
    auto make_attn = [&](const std::string& name) {
      store_.ones(name + ".ln.g", 1, d);
      store_.zeros(name + ".ln.b", 1, d);
      for (const char* w : {".wq", ".wk", ".wv", ".wo"}) store_.xavier(name + w, d, d, rng);
      for (const char* b : {".bq", ".bk", ".bv", ".bo"}) store_.zeros(name + b, 1, d);
    };
    make_attn(pre + ".self");
    if (with_cross) make_attn(pre + ".cross");
    store_.ones(pre + ".ff.ln.g", 1, d);
    store_.zeros(pre + ".ff.ln.b", 1, d);
    store_.xavier(pre + ".ff.w1", d, d * cfg_.ff_multiple, rng);
    store_.zeros(pre + ".ff.b1", 1, d * cfg_.ff_multiple);
    store_.xavier(pre + ".ff.w2", d * cfg_.ff_multiple, d, rng);
    store_.zeros(pre + ".ff.b2", 1, d);
  }

  ModelConfig cfg_;
  nn::ParamStore<Real> store_;
};

// Label rows as a constant N x T matrix in row order.
template <typename Real>
Mat<Real> labels_matrix(const FrameLabelSet& labels) {
  const Eigen::Index n = static_cast<Eigen::Index>(labels.rows.size());
  const Eigen::Index t = labels.n_frames;
  Mat<Real> out(n, t);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < t; ++c)
      out(r, c) = static_cast<Real>(labels.rows[r].second[c]);
  return out;
}

}  // namespace ptsd
