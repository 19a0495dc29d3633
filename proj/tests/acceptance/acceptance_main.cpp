// Acceptance suite: one pass/fail line per criterion.
//
//   1. label-algebra invariants on randomized annotations
//   2. metric implementations vs brute-force oracles
//   3. full-model gradient check (T=8, D=16)
//   4. bit-level query-permutation equivariance + byte-reproducible runs
//   5. toy trend reproduction on synthetic two-speaker data
//   6. baseline comparability (tsvad DER gap, three-way gender report)
//   7. chunked-inference identity
//
// usage: ptsd_acceptance [--only 1,2,...] [--workdir DIR]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "ptsd/baselines.hpp"
#include "ptsd/checkpoint.hpp"
#include "ptsd/config.hpp"
#include "ptsd/infer.hpp"
#include "ptsd/labels.hpp"
#include "ptsd/metrics.hpp"
#include "ptsd/model.hpp"
#include "ptsd/report.hpp"
#include "ptsd/simulate.hpp"
#include "ptsd/train.hpp"

#include "../oracles.hpp"
#include "../testutil.hpp"

namespace fs = std::filesystem;
using namespace ptsd;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

fs::path g_workdir = "acceptance_work";

// ---------------------------------------------------------------------------
// Shared toy protocol (criterion 5 pins it: 50 x 60 s train, 10 eval, D = 64,
// <= 30 epochs)
// ---------------------------------------------------------------------------

ModelConfig toy_model_config(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.d_model = 64;
  cfg.frontend.d_model = 64;
  return cfg;
}

TrainConfig toy_train_config(uint64_t seed, int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  // two passes over the 50-clip manifest per epoch; epochs stay <= 30 and a
  // full run stays inside the 30-minute budget on two CPU cores
  cfg.steps_per_epoch = 100;
  return cfg;
}

struct ToyData {
  DatasetManifest train_manifest;
  DatasetManifest eval_manifest;
};

ToyData ensure_toy_data() {
  const fs::path train_dir = g_workdir / "sim2_train";
  const fs::path eval_dir = g_workdir / "sim2_eval";
  ToyData data;
  ConversationStats stats;
  if (fs::exists(train_dir / "manifest.tsv")) {
    data.train_manifest = read_manifest((train_dir / "manifest.tsv").string());
    data.eval_manifest = read_manifest((eval_dir / "manifest.tsv").string());
  } else {
    std::cout << "  [setup] simulating sim2spk toy data (50 train + 10 eval clips x 60 s)"
              << std::endl;
    data.train_manifest = build_dataset(stats, 2, 50, 60.0, train_dir.string(), 101);
    data.eval_manifest = build_dataset(stats, 2, 10, 60.0, eval_dir.string(), 202);
  }
  return data;
}

// Trains (or reloads) one toy system; float precision for the CPU budget.
struct TrainedSystem {
  std::unique_ptr<Model<float>> model;
  EvalSummary eval;
};

TrainedSystem ensure_trained(ModelKind kind, uint64_t seed, int epochs,
                             const std::string& tag) {
  const ToyData data = ensure_toy_data();
  const fs::path run_dir = g_workdir / ("run_" + tag);
  ModelConfig mc = toy_model_config(kind);
  TrainConfig tc = toy_train_config(seed, epochs);

  TrainedSystem sys;
  sys.model = std::make_unique<Model<float>>(mc, tc.seed);
  ClipStore<float> eval_store(data.eval_manifest, mc.frontend);

  const fs::path best = run_dir / "best.bin";
  if (fs::exists(best)) {
    load_checkpoint(best.string(), *sys.model);
    std::cout << "  [setup] reusing " << best << std::endl;
  } else {
    std::cout << "  [setup] training " << tag << " (" << epochs << " epochs)" << std::endl;
    ClipStore<float> train_store(data.train_manifest, mc.frontend);
    const auto result =
        train_loop(*sys.model, train_store, &eval_store, tc, run_dir.string(), tag, 0, &std::cout);
    load_checkpoint(result.best_checkpoint, *sys.model);
  }
  sys.eval = validate_model(*sys.model, eval_store, tc);
  return sys;
}

double summary_get(const EvalSummary& s, const std::string& key, const std::string& metric) {
  auto it = s.find(key);
  if (it == s.end() || !it->second.count(metric)) return std::nan("");
  return it->second.at(metric);
}

// ---------------------------------------------------------------------------
// criterion 1: label algebra on 1000 randomized annotations
// ---------------------------------------------------------------------------

Check criterion1() {
  Check c;
  Rng rng(510);
  int round_trips = 0;
  for (int iter = 0; iter < 1000; ++iter) {
    const auto ann = ptsdtest::random_annotation(rng, 4, 10.0);
    const auto profiles = ptsdtest::profiles_for(ann, rng);
    const auto act = segments_to_activity(ann);
    const auto counter = derive_counter_labels(act);
    const auto gender = act.speakers.empty()
                            ? std::array<BinaryRow, 2>{BinaryRow(act.n_frames, 0),
                                                       BinaryRow(act.n_frames, 0)}
                            : derive_gender_labels(act, profiles);
    for (int t = 0; t < act.n_frames && c.ok; ++t) {
      const int k = act.active_count(t);
      c.require(counter[0][t] + counter[1][t] + counter[2][t] == 1, "counter rows not one-hot");
      c.require(counter[2][t] == (k >= 2 ? 1 : 0), "overlap row != indicator(count >= 2)");
      c.require(counter[1][t] == (k == 1 ? 1 : 0), "single row != indicator(count == 1)");
      c.require(counter[0][t] == (k == 0 ? 1 : 0), "non-speech row != indicator(count == 0)");
      const int speech = counter[1][t] | counter[2][t];
      c.require(gender[0][t] <= speech && gender[1][t] <= speech,
                "gender rows exceed speech frames");
    }
    bool any_active = false;
    for (const auto& row : act.rows)
      for (auto v : row) any_active |= v != 0;
    if (any_active) {
      const auto keynote = derive_keynote_labels(act);
      c.require(keynote.row == act.rows[act.speaker_row(keynote.speaker_id)],
                "keynote row != keynote speaker activity");
    }
    // round trip on each speaker row
    for (size_t s = 0; s < act.rows.size(); ++s) {
      SegmentAnnotation one;
      one.clip_id = "rt";
      one.duration = act.n_frames / 25.0;
      for (const auto& iv : frames_to_segments(act.rows[s]))
        one.segments.push_back({"x", iv.onset, iv.offset});
      if (one.segments.empty()) continue;
      const auto back = segments_to_activity(one);
      c.require(back.rows[0] == act.rows[s], "frames->segments->frames round trip failed");
      ++round_trips;
    }
    if (!c.ok) break;
  }
  c.require(round_trips > 500, "too few round-trip cases exercised");
  return c;
}

// ---------------------------------------------------------------------------
// criterion 2: metric oracles
// ---------------------------------------------------------------------------

Check criterion2() {
  Check c;
  Rng rng(520);
  int ranked = 0;
  for (int iter = 0; iter < 500 && c.ok; ++iter) {
    ScoredFrames sf;
    const int n = 10 + static_cast<int>(rng.uniform_int(90));
    const bool ties = iter % 2 == 0;
    for (int i = 0; i < n; ++i) {
      sf.labels.push_back(rng.bernoulli(0.4));
      sf.scores.push_back(ties ? std::round(rng.uniform() * 8.0) / 8.0 : rng.uniform());
    }
    long pos = 0, neg = 0;
    for (auto y : sf.labels) (y ? pos : neg) += 1;
    if (pos == 0 || neg == 0) continue;
    c.require(std::abs(average_precision(sf) - ptsdtest::ap_oracle(sf)) < 1e-9, "AP vs oracle");
    c.require(std::abs(roc_auc(sf) - ptsdtest::auc_pair_oracle(sf)) < 1e-9, "AUC vs oracle");
    c.require(std::abs(eer(sf) - ptsdtest::eer_sweep_oracle(sf)) < 1e-6, "EER vs oracle");
    ++ranked;
  }
  c.require(ranked > 400, "too few ranking instances");

  int der_cases = 0;
  for (int iter = 0; iter < 500 && c.ok; ++iter) {
    const auto ref = ptsdtest::random_annotation(rng, 3, 4.0);
    auto hyp = ptsdtest::random_annotation(rng, 3, 4.0);
    hyp.duration = ref.duration;
    for (auto& seg : hyp.segments) {
      seg.onset = std::min(seg.onset, ref.duration - 0.02);
      seg.offset = std::min(seg.offset, ref.duration);
    }
    if (ref.segments.empty()) continue;
    const double collar = iter % 3 == 0 ? 0.0 : 0.25;
    const bool score_overlap = iter % 2 == 0;
    DerResult got;
    try {
      got = der(ref, hyp, collar, score_overlap);
    } catch (const ValidationError&) {
      continue;
    }
    const auto want = ptsdtest::der_exhaustive_oracle(ref, hyp, collar, score_overlap);
    c.require(std::abs(got.der - want.der) < 1e-9, "DER vs exhaustive-mapping oracle");
    c.require(std::abs(got.der - (got.miss + got.false_alarm + got.speaker_confusion)) < 1e-12,
              "DER decomposition identity");
    ++der_cases;
  }
  c.require(der_cases > 300, "too few DER instances");
  return c;
}

// ---------------------------------------------------------------------------
// criterion 3: gradient check, T = 8, D = 16
// ---------------------------------------------------------------------------

Check criterion3() {
  Check c;
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  cfg.frontend.n_mels = 8;
  cfg.frontend.d_model = 16;
  Model<double> model(cfg, 530);
  Rng rng(531);

  Mat<double> raw(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) raw(i, j) = rng.normal();
  std::vector<PromptSpec> specs = {PromptSpec::timestamped(2),
                                   PromptSpec::timestamped(6),
                                   PromptSpec::of_gender(Gender::female),
                                   PromptSpec::of_gender(Gender::male),
                                   PromptSpec::of_count(CountClass::non_speech),
                                   PromptSpec::of_count(CountClass::single),
                                   PromptSpec::of_count(CountClass::overlap),
                                   PromptSpec::keynote()};
  Mat<double> labels(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) labels(i, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;

  auto loss_value = [&]() {
    nn::Tape<double> tape(false, nullptr, false);
    return tape.bce_mean(model.posteriors_graph(tape, raw, specs), labels)->value(0, 0);
  };
  model.params().zero_grads();
  {
    nn::Tape<double> tape(false, nullptr, true);
    tape.backward(tape.bce_mean(model.posteriors_graph(tape, raw, specs), labels));
  }

  auto central_diff = [&](double& slot, double step) {
    const double saved = slot;
    slot = saved + step;
    const double up = loss_value();
    slot = saved - step;
    const double down = loss_value();
    slot = saved;
    return (up - down) / (2.0 * step);
  };

  const double h = 1e-4;
  for (auto& p : model.params().all()) {
    double num_sq = 0.0, ana_sq = 0.0, diff_sq = 0.0;
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        const double analytic = p->grad(i, j);
        double numeric = central_diff(p->value(i, j), h);
        if (std::abs(analytic - numeric) > 1e-4 * std::max(1.0, std::abs(analytic))) {
          // a perturbation that straddles a relu kink makes the finite
          // difference itself step-dependent; a genuine gradient bug does
          // not. re-measure at h/4 and skip only step-unstable entries.
          const double refined = central_diff(p->value(i, j), h / 4.0);
          if (std::abs(refined - numeric) > 0.25 * std::abs(numeric - analytic)) continue;
          numeric = refined;
        }
        num_sq += numeric * numeric;
        ana_sq += analytic * analytic;
        diff_sq += (analytic - numeric) * (analytic - numeric);
      }
    }
    if (std::sqrt(num_sq) < 1e-6 && std::sqrt(ana_sq) < 1e-6) continue;  // exactly-zero blocks
    const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(num_sq), 1e-12);
    c.require(rel < 1e-3, "block " + p->name + " rel err " + std::to_string(rel));
  }
  return c;
}

// ---------------------------------------------------------------------------
// criterion 4: equivariance + byte reproducibility
// ---------------------------------------------------------------------------

template <typename Real>
bool permutation_equivariant() {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.frontend.n_mels = 12;
  cfg.frontend.d_model = 32;
  Model<Real> model(cfg, 540);
  Rng rng(541);
  Mat<Real> raw(60, 12);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 12; ++j) raw(i, j) = static_cast<Real>(rng.normal());

  std::vector<PromptSpec> specs = {PromptSpec::timestamped(5),
                                   PromptSpec::timestamped(33),
                                   PromptSpec::of_gender(Gender::female),
                                   PromptSpec::of_gender(Gender::male),
                                   PromptSpec::of_count(CountClass::non_speech),
                                   PromptSpec::of_count(CountClass::single),
                                   PromptSpec::of_count(CountClass::overlap),
                                   PromptSpec::keynote()};
  const std::vector<size_t> perm = {6, 3, 0, 7, 2, 5, 1, 4};
  std::vector<PromptSpec> permuted(specs.size());
  for (size_t i = 0; i < perm.size(); ++i) permuted[i] = specs[perm[i]];

  const auto base = model.forward(raw, specs);
  const auto shuffled = model.forward(raw, permuted);
  for (size_t i = 0; i < perm.size(); ++i)
    if (shuffled.rows[i].second != base.rows[perm[i]].second) return false;
  return true;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Check criterion4() {
  Check c;
  c.require(permutation_equivariant<double>(), "permutation equivariance (f64)");
  c.require(permutation_equivariant<float>(), "permutation equivariance (f32)");

  // seeded end-to-end byte reproducibility: dataset + short training, twice
  for (int round = 0; round < 2; ++round) {
    const fs::path dir = g_workdir / ("repro_" + std::to_string(round));
    fs::remove_all(dir);
    ConversationStats stats;
    const auto manifest = build_dataset(stats, 2, 3, 20.0, (dir / "data").string(), 42);
    ModelConfig mc;
    mc.d_model = 32;
    mc.n_heads = 4;
    mc.n_encoder_layers = 1;
    mc.n_decoder_layers = 1;
    mc.frontend.d_model = 32;
    Model<double> model(mc, 7);
    ClipStore<double> store(manifest, mc.frontend);
    TrainConfig tc;
    tc.epochs = 2;
    tc.chunk_min_s = 10.0;
    tc.chunk_max_s = 15.0;
    tc.seed = 7;
    train_loop(model, store, &store, tc, (dir / "run").string(), "repro");
  }
  c.require(file_bytes(g_workdir / "repro_0" / "data" / "manifest.tsv") ==
                file_bytes(g_workdir / "repro_1" / "data" / "manifest.tsv"),
            "dataset bytes differ between identical runs");
  c.require(file_bytes(g_workdir / "repro_0" / "data" / "clip_0000.wav") ==
                file_bytes(g_workdir / "repro_1" / "data" / "clip_0000.wav"),
            "audio bytes differ between identical runs");
  c.require(file_bytes(g_workdir / "repro_0" / "run" / "ckpt_epoch_002.bin") ==
                file_bytes(g_workdir / "repro_1" / "run" / "ckpt_epoch_002.bin"),
            "checkpoint bytes differ between identical runs");
  c.require(file_bytes(g_workdir / "repro_0" / "run" / "metrics.jsonl") ==
                file_bytes(g_workdir / "repro_1" / "run" / "metrics.jsonl"),
            "metric logs differ between identical runs");
  return c;
}

// ---------------------------------------------------------------------------
// criterion 5: toy trend reproduction
// ---------------------------------------------------------------------------

struct TrendOutcome {
  bool ok;
  std::string detail;
  EvalSummary eval;
};

// Trained-model locality: fraction of timestamped prompts whose posterior at
// their own anchor frame exceeds one half, over the held-out eval chunks.
double anchor_locality(Model<float>& model, ClipStore<float>& eval_store, double chunk_s) {
  long hits = 0, total = 0;
  const int chunk_frames = static_cast<int>(std::lround(chunk_s * FRAME_RATE));
  for (size_t i = 0; i < eval_store.size(); ++i) {
    const auto& clip = eval_store.get(i);
    for (int begin = 0; begin < clip.activity.n_frames; begin += chunk_frames) {
      const int len = std::min(chunk_frames, clip.activity.n_frames - begin);
      const ActivityMatrix act = slice_activity(clip.activity, begin, len);
      std::vector<PromptSpec> specs;
      for (size_t s = 0; s < act.speakers.size(); ++s) {
        const auto solo = solo_frames_of(act, static_cast<int>(s));
        if (!solo.empty()) specs.push_back(PromptSpec::timestamped(solo[solo.size() / 2]));
      }
      if (specs.empty()) continue;
      const auto post =
          model.forward(Mat<float>(clip.raw_features.middleRows(begin, len)), specs);
      for (size_t r = 0; r < specs.size(); ++r) {
        hits += post.rows[r].second[specs[r].anchor_frame] > 0.5 ? 1 : 0;
        ++total;
      }
    }
  }
  return total > 0 ? static_cast<double>(hits) / total : 0.0;
}

TrendOutcome trend_for_seed(uint64_t seed, const std::string& tag) {
  const TrainedSystem sys = ensure_trained(ModelKind::ptsd, seed, 30, tag);
  const double ap_n_single = summary_get(sys.eval, "N:single", "ap");
  const double ap_n = summary_get(sys.eval, "N", "ap");
  const double ap_t = summary_get(sys.eval, "T", "ap");
  const double ap_k = summary_get(sys.eval, "K", "ap");
  const double ap_g = summary_get(sys.eval, "G", "ap");

  const ToyData data = ensure_toy_data();
  ClipStore<float> eval_store(data.eval_manifest, sys.model->config().frontend);
  const TrainConfig tc = toy_train_config(seed, 30);
  const double locality = anchor_locality(*sys.model, eval_store, tc.eval_chunk_s);

  std::ostringstream os;
  os << "AP(N single)=" << ap_n_single << " AP(T)=" << ap_t << " AP(K)=" << ap_k
     << " AP(G)=" << ap_g << " AP(N)=" << ap_n << " anchor-locality=" << locality;
  std::cout << "  [" << tag << "] " << os.str() << std::endl;

  TrendOutcome out;
  out.eval = sys.eval;
  out.ok = ap_n_single >= 0.95 && ap_t >= 0.85 && ap_k >= 0.80 && ap_g >= 0.80 &&
           ap_g <= ap_n + 0.02 && locality >= 0.95;
  out.detail = os.str();
  return out;
}

Check criterion5() {
  Check c;
  // failures must reproduce across 3 seeds before counting
  const uint64_t seeds[3] = {1, 2, 3};
  std::string detail;
  for (int i = 0; i < 3; ++i) {
    const auto outcome = trend_for_seed(seeds[i], "ptsd_seed" + std::to_string(seeds[i]));
    detail = outcome.detail;
    if (outcome.ok) {
      c.detail = detail;
      return c;
    }
    std::cout << "  [trend] seed " << seeds[i] << " below thresholds, retrying" << std::endl;
  }
  c.require(false, "thresholds failed on 3 seeds; last: " + detail);
  return c;
}

// ---------------------------------------------------------------------------
// criterion 6: baseline comparability
// ---------------------------------------------------------------------------

// Per-speaker posterior rows across a whole clip for the DER protocol: ptsd
// re-anchors per chunk (zeros where a speaker has no solo frames), tsvad uses
// global enrollments.
template <typename Real>
std::vector<std::pair<std::string, std::vector<double>>> speaker_rows_for_clip(
    Model<Real>& model, const ClipData<Real>& clip, double chunk_s, double enroll_s) {
  const int t_full = clip.activity.n_frames;
  const int chunk_frames = static_cast<int>(std::lround(chunk_s * FRAME_RATE));
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (const auto& id : clip.activity.speakers) rows.emplace_back(id, std::vector<double>());

  if (model.config().kind == ModelKind::tsvad) {
    std::vector<std::pair<std::string, Mat<Real>>> enrollments;
    const int want = static_cast<int>(std::lround(enroll_s * FRAME_RATE));
    for (size_t s = 0; s < clip.activity.speakers.size(); ++s) {
      const auto [b, e] = pick_enrollment_frames(clip.activity, static_cast<int>(s), want, nullptr);
      enrollments.emplace_back(clip.activity.speakers[s], clip.raw_features.middleRows(b, e - b));
    }
    const auto post = chunked_tsvad(model, clip.raw_features, enrollments, chunk_s);
    for (size_t s = 0; s < rows.size(); ++s) rows[s].second = post.rows[s].second;
    return rows;
  }

  for (int begin = 0; begin < t_full; begin += chunk_frames) {
    const int len = std::min(chunk_frames, t_full - begin);
    const ActivityMatrix act = slice_activity(clip.activity, begin, len);
    std::vector<PromptSpec> specs;
    std::vector<int> spec_speaker;
    for (size_t s = 0; s < act.speakers.size(); ++s) {
      const auto solo = solo_frames_of(act, static_cast<int>(s));
      if (solo.empty()) continue;
      specs.push_back(PromptSpec::timestamped(solo[solo.size() / 2]));
      spec_speaker.push_back(static_cast<int>(s));
    }
    std::vector<std::vector<double>> chunk_rows(rows.size(),
                                                std::vector<double>(len, 0.0));
    if (!specs.empty()) {
      const auto post = model.forward(Mat<Real>(clip.raw_features.middleRows(begin, len)), specs);
      for (size_t i = 0; i < specs.size(); ++i) chunk_rows[spec_speaker[i]] = post.rows[i].second;
    }
    for (size_t s = 0; s < rows.size(); ++s)
      rows[s].second.insert(rows[s].second.end(), chunk_rows[s].begin(), chunk_rows[s].end());
  }
  return rows;
}

template <typename Real>
DerResult pooled_speaker_der(Model<Real>& model, ClipStore<Real>& store, const TrainConfig& tc,
                             const ScoreOptions& opt) {
  detail::DerAccumulator acc;
  for (size_t i = 0; i < store.size(); ++i) {
    const auto& clip = store.get(i);
    const auto rows =
        speaker_rows_for_clip(model, clip, tc.eval_chunk_s, tc.enroll_seconds);
    SegmentAnnotation hyp = posteriors_to_annotation(clip.clip_id, clip.duration, rows,
                                                     opt.threshold, opt.median_window);
    SegmentAnnotation ref;
    ref.clip_id = clip.clip_id;
    ref.duration = clip.duration;
    for (size_t s = 0; s < clip.activity.speakers.size(); ++s)
      for (const auto& iv : frames_to_segments(clip.activity.rows[s]))
        ref.segments.push_back({clip.activity.speakers[s], iv.onset, iv.offset});
    acc.add(der(ref, hyp, opt.collar, opt.score_overlap));
  }
  return acc.total();
}

Check criterion6() {
  Check c;
  const ToyData data = ensure_toy_data();
  const TrainedSystem ptsd_sys = ensure_trained(ModelKind::ptsd, 1, 30, "ptsd_seed1");
  const TrainedSystem tsvad_sys = ensure_trained(ModelKind::tsvad, 1, 30, "tsvad_seed1");

  TrainConfig tc = toy_train_config(1, 30);
  ScoreOptions opt;
  ClipStore<float> eval_a(data.eval_manifest, ptsd_sys.model->config().frontend);
  ClipStore<float> eval_b(data.eval_manifest, tsvad_sys.model->config().frontend);

  const DerResult der_ptsd = pooled_speaker_der(*ptsd_sys.model, eval_a, tc, opt);
  const DerResult der_tsvad = pooled_speaker_der(*tsvad_sys.model, eval_b, tc, opt);
  std::cout << "  [der] PTSD(T) " << der_ptsd.der << "  mod. TS-VAD " << der_tsvad.der
            << std::endl;
  c.require(std::isfinite(der_ptsd.der) && std::isfinite(der_tsvad.der), "non-finite DER");
  c.require(std::abs(der_ptsd.der - der_tsvad.der) <= 0.10,
            "tsvad DER not within 10 points of PTSD(T): " + std::to_string(der_tsvad.der) +
                " vs " + std::to_string(der_ptsd.der));

  // three-way gender report: baseline1, baseline2, PTSD(G)
  const TrainedSystem b1 = ensure_trained(ModelKind::baseline1, 1, 8, "baseline1_seed1");
  const TrainedSystem b2 = ensure_trained(ModelKind::baseline2, 1, 8, "baseline2_seed1");

  auto gender_dump = [&](Model<float>& model, ClipStore<float>& store) {
    ScoreDump dump;
    dump.chunk_seconds = tc.eval_chunk_s;
    for (size_t i = 0; i < store.size(); ++i) {
      const auto& clip = store.get(i);
      PosteriorSet post;
      if (model.config().kind == ModelKind::ptsd) {
        const std::vector<PromptSpec> specs = {PromptSpec::of_gender(Gender::female),
                                               PromptSpec::of_gender(Gender::male)};
        post = chunked_infer(model, clip.raw_features, specs, tc.eval_chunk_s, &clip.activity);
      } else {
        post = chunked_gender(model, clip.raw_features, tc.eval_chunk_s);
      }
      for (const auto& [desc, values] : post.rows) dump.rows.emplace_back(clip.clip_id, desc, values);
    }
    return dump;
  };

  std::map<std::string, std::map<std::string, double>> table;
  struct System {
    std::string name;
    Model<float>* model;
    ClipStore<float>* store;
  };
  ClipStore<float> eval_c(data.eval_manifest, b1.model->config().frontend);
  ClipStore<float> eval_d(data.eval_manifest, b2.model->config().frontend);
  std::vector<System> systems = {{"baseline1", b1.model.get(), &eval_c},
                                 {"baseline2", b2.model.get(), &eval_d},
                                 {"ptsd_g", ptsd_sys.model.get(), &eval_a}};
  for (auto& sys : systems) {
    ScoreOptions so = opt;
    so.dataset = sys.name;
    const auto records = score_dump_report(gender_dump(*sys.model, *sys.store),
                                           data.eval_manifest, so);
    for (const auto& r : records)
      if (r.attribute == "G" && r.defined) table[sys.name][r.metric] = r.value;
  }
  std::cout << "  [gender report] system ap auc eer der" << std::endl;
  std::vector<ReportRecord> report;
  report.push_back({"comparison", "T", "der", der_ptsd.der, true});
  report.push_back({"comparison", "E", "der", der_tsvad.der, true});
  for (const auto& [name, metrics] : table) {
    std::cout << "    " << name;
    for (const char* m : {"ap", "auc", "eer", "der"}) {
      auto it = metrics.find(m);
      std::cout << " " << (it == metrics.end() ? std::nan("") : it->second);
      c.require(it != metrics.end(), name + " report missing metric " + m);
      if (it != metrics.end()) report.push_back({name, "G", m, it->second, true});
    }
    std::cout << std::endl;
  }
  write_report((g_workdir / "comparison_report.txt").string(), report);

  // trained gender classifiers stay quiet on silence
  AudioClip silence;
  silence.samples.assign(20 * SAMPLE_RATE, 0.0);
  const auto silent_raw = raw_frontend_features<float>(silence, b1.model->config().frontend);
  for (auto* sys : {b1.model.get(), b2.model.get()}) {
    const auto post = gender_baseline_forward(*sys, silent_raw);
    long low = 0, total = 0;
    for (const auto& [desc, row] : post.rows)
      for (double v : row) {
        low += v < 0.5 ? 1 : 0;
        ++total;
      }
    const double frac = static_cast<double>(low) / total;
    std::cout << "  [silence] " << to_string(sys->config().kind)
              << " low-posterior fraction " << frac << std::endl;
    c.require(frac >= 0.9, std::string(to_string(sys->config().kind)) +
                               " posteriors not low on silent input");
  }
  return c;
}

// ---------------------------------------------------------------------------
// criterion 7: chunked-inference identity
// ---------------------------------------------------------------------------

Check criterion7() {
  Check c;
  ConversationStats stats;
  const std::vector<SpeakerProfile> profiles = {synth_speaker(570, Gender::female),
                                                synth_speaker(571, Gender::male)};
  const auto conv = sample_conversation(stats, profiles, 80.0, 57);
  const auto activity = segments_to_activity(conv.annotation);

  ModelConfig mc;
  mc.d_model = 32;
  mc.frontend.d_model = 32;
  Model<double> model(mc, 572);
  const auto raw = raw_frontend_features<double>(conv.audio, mc.frontend);

  // anchor in the first chunk; categorical prompts everywhere
  int anchor = -1;
  for (int t = 0; t < 1000 && anchor < 0; ++t)
    if (activity.rows[0][t] && activity.active_count(t) == 1) anchor = t;
  c.require(anchor >= 0, "no solo frame for speaker 0 in the first 40 s");
  if (!c.ok) return c;

  std::vector<PromptSpec> specs = {PromptSpec::timestamped(anchor),
                                   PromptSpec::of_gender(Gender::female),
                                   PromptSpec::of_count(CountClass::overlap),
                                   PromptSpec::keynote()};
  const auto chunked = chunked_infer(model, raw, specs, 40.0, &activity);
  c.require(chunked.rows[0].second.size() == 2000, "80 s clip should yield 2000 frames");

  // independent forwards over the two 40 s halves, anchors re-resolved the
  // same way chunked_infer specifies
  for (int half = 0; half < 2; ++half) {
    const int begin = half * 1000;
    std::vector<PromptSpec> local = specs;
    if (anchor >= begin && anchor < begin + 1000) {
      local[0].anchor_frame = anchor - begin;
    } else {
      std::vector<int> solo;
      for (int t = begin; t < begin + 1000; ++t)
        if (activity.rows[0][t] && activity.active_count(t) == 1) solo.push_back(t - begin);
      c.require(!solo.empty(), "no solo frames to re-anchor in half " + std::to_string(half));
      if (!c.ok) return c;
      local[0].anchor_frame = solo[solo.size() / 2];
    }
    const auto direct = model.forward(Mat<double>(raw.middleRows(begin, 1000)), local);
    for (size_t r = 0; r < specs.size(); ++r) {
      for (int t = 0; t < 1000; ++t) {
        if (direct.rows[r].second[t] != chunked.rows[r].second[begin + t]) {
          c.require(false, "chunked output differs from direct forward at row " +
                               std::to_string(r) + " frame " + std::to_string(begin + t));
          return c;
        }
      }
    }
  }

  // a 40 s clip is a single chunk: identical to one direct forward
  const Mat<double> head = raw.middleRows(0, 1000);
  const auto act40 = slice_activity(activity, 0, 1000);
  const auto one = chunked_infer(model, head, specs, 40.0, &act40);
  const auto direct = model.forward(head, specs);
  for (size_t r = 0; r < specs.size(); ++r)
    c.require(one.rows[r].second == direct.rows[r].second, "single-chunk identity failed");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else if (std::strcmp(argv[i], "--workdir") == 0 && i + 1 < argc) {
      g_workdir = argv[++i];
    }
  }
  fs::create_directories(g_workdir);

  struct Criterion {
    int id;
    const char* name;
    Check (*fn)();
  };
  const Criterion criteria[] = {
      {1, "label-algebra invariants on 1000 randomized annotations", criterion1},
      {2, "metrics match brute-force oracles on 500 random instances", criterion2},
      {3, "analytic gradients match finite differences (T=8, D=16)", criterion3},
      {4, "bit-exact query-permutation equivariance and byte-reproducible seeded runs",
       criterion4},
      {5, "toy trend reproduction on synthetic sim2spk", criterion5},
      {6, "baseline comparability (mod. TS-VAD DER gap, three-way gender report)", criterion6},
      {7, "chunked-inference identity on an 80 s clip", criterion7},
  };

  int failures = 0;
  for (const auto& crit : criteria) {
    if (!only.empty() && !only.count(crit.id)) continue;
    std::cout << "criterion " << crit.id << ": " << crit.name << std::endl;
    const auto t0 = Clock::now();
    Check check;
    try {
      check = crit.fn();
    } catch (const std::exception& e) {
      check.ok = false;
      check.detail = std::string("exception: ") + e.what();
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s (%.1f s)%s%s\n", check.ok ? "PASS" : "FAIL", crit.id,
                crit.name, elapsed, check.detail.empty() ? "" : " -- ",
                check.detail.c_str());
    std::fflush(stdout);
    if (!check.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
