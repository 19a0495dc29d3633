#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptsd/baselines.hpp"
#include "ptsd/checkpoint.hpp"
#include "ptsd/metrics.hpp"
#include "ptsd/model.hpp"
#include "ptsd/simulate.hpp"

namespace ptsd {

struct TrainConfig {
  double lr0 = 1e-4;
  double decay = 0.95;  // per epoch
  int batch_size = 1;
  int epochs = 10;
  int steps_per_epoch = 0;  // 0 = one optimizer step per manifest record
  double chunk_min_s = 20.0;
  double chunk_max_s = 60.0;
  double eval_chunk_s = 40.0;
  uint64_t seed = 1;
  int max_prompts = 0;  // 0 = supervise with every available prompt
  double grad_clip = 5.0;
  double enroll_seconds = 2.0;  // tsvad enrollment length

  void validate() const {
    if (lr0 <= 0.0) throw ValidationError("lr0 must be positive");
    if (decay <= 0.0 || decay > 1.0) throw ValidationError("decay must be in (0, 1]");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(0.0 < chunk_min_s && chunk_min_s <= chunk_max_s))
      throw ValidationError("need 0 < chunk_min_s <= chunk_max_s");
    if (eval_chunk_s <= 0.0) throw ValidationError("eval_chunk_s must be positive");
  }

  double lr_at_epoch(int epoch) const {
    if (epoch < 0) throw ValidationError("epoch must be >= 0");
    return lr0 * std::pow(decay, epoch);
  }
};

// ---------------------------------------------------------------------------
// Clip cache: raw frontend features + activity, loaded once per clip.
// ---------------------------------------------------------------------------

template <typename Real>
struct ClipData {
  std::string clip_id;
  double duration = 0.0;
  Mat<Real> raw_features;  // T_full x raw_width
  ActivityMatrix activity;
  std::vector<SpeakerProfile> profiles;
};

template <typename Real>
class ClipStore {
 public:
  ClipStore(const DatasetManifest& manifest, FrontendConfig frontend)
      : manifest_(manifest), frontend_(std::move(frontend)), cache_(manifest.records.size()) {}

  size_t size() const { return manifest_.records.size(); }
  const DatasetManifest& manifest() const { return manifest_; }

  const ClipData<Real>& get(size_t i) {
    if (!cache_[i]) {
      const auto& rec = manifest_.records.at(i);
      AudioClip audio = read_wav(manifest_.resolve(rec.wav_path));
      audio.clip_id = rec.clip_id;
      auto data = std::make_unique<ClipData<Real>>();
      data->clip_id = rec.clip_id;
      data->duration = audio.duration();
      data->raw_features = raw_frontend_features<Real>(audio, frontend_);
      SegmentAnnotation ann = read_rttm(manifest_.resolve(rec.rttm_path), data->duration);
      ann.clip_id = rec.clip_id;
      data->activity = segments_to_activity(ann);
      data->profiles = rec.profiles;
      cache_[i] = std::move(data);
    }
    return *cache_[i];
  }

 private:
  DatasetManifest manifest_;
  FrontendConfig frontend_;
  std::vector<std::unique_ptr<ClipData<Real>>> cache_;
};

// ---------------------------------------------------------------------------
// Example sampling
// ---------------------------------------------------------------------------

inline std::vector<int> solo_frames_of(const ActivityMatrix& act, int speaker_row) {
  std::vector<int> out;
  for (int t = 0; t < act.n_frames; ++t)
    if (act.rows[speaker_row][t] && act.active_count(t) == 1) out.push_back(t);
  return out;
}

namespace detail {

// Prompt set for a chunk: one timestamped anchor per speaker that has a solo
// frame, both genders, all three counter classes, and keynote (skipped when
// the chunk is silent). rng == nullptr anchors at the middle solo frame.
inline std::vector<PromptSpec> prompt_set_for(const ActivityMatrix& act, Rng* rng,
                                              int max_prompts) {
  bool any_speech = false;
  for (const auto& row : act.rows)
    for (auto v : row) any_speech |= v != 0;

  std::vector<PromptSpec> specs;
  for (size_t s = 0; s < act.rows.size(); ++s) {
    const auto solo = solo_frames_of(act, static_cast<int>(s));
    if (solo.empty()) continue;
    const size_t pick = rng ? rng->uniform_int(solo.size()) : solo.size() / 2;
    specs.push_back(PromptSpec::timestamped(solo[pick]));
  }
  specs.push_back(PromptSpec::of_gender(Gender::female));
  specs.push_back(PromptSpec::of_gender(Gender::male));
  specs.push_back(PromptSpec::of_count(CountClass::non_speech));
  specs.push_back(PromptSpec::of_count(CountClass::single));
  specs.push_back(PromptSpec::of_count(CountClass::overlap));
  if (any_speech) specs.push_back(PromptSpec::keynote());
  if (rng && max_prompts > 0) {
    // drop random prompts, preserving order of the survivors
    while (static_cast<int>(specs.size()) > max_prompts)
      specs.erase(specs.begin() + static_cast<long>(rng->uniform_int(specs.size())));
  }
  return specs;
}

}  // namespace detail

inline std::vector<PromptSpec> sample_prompt_set(const ActivityMatrix& act, Rng& rng,
                                                 int max_prompts = 0) {
  return detail::prompt_set_for(act, &rng, max_prompts);
}

// Deterministic variant used for validation.
inline std::vector<PromptSpec> fixed_prompt_set(const ActivityMatrix& act) {
  return detail::prompt_set_for(act, nullptr, 0);
}

// Longest/required-length solo interval for enrollment, as frame range on the
// full clip.
inline std::pair<int, int> pick_enrollment_frames(const ActivityMatrix& act, int speaker_row,
                                                  int want_frames, Rng* rng) {
  std::vector<std::pair<int, int>> runs;  // [begin, end)
  int t = 0;
  while (t < act.n_frames) {
    if (act.rows[speaker_row][t] && act.active_count(t) == 1) {
      int end = t;
      while (end < act.n_frames && act.rows[speaker_row][end] && act.active_count(end) == 1) ++end;
      runs.emplace_back(t, end);
      t = end;
    } else {
      ++t;
    }
  }
  if (runs.empty())
    throw ValidationError("no single-speaker region to enroll speaker " +
                          act.speakers[speaker_row]);
  std::vector<std::pair<int, int>> fitting;
  for (const auto& r : runs)
    if (r.second - r.first >= want_frames) fitting.push_back(r);
  if (fitting.empty()) {
    // fall back to the longest run
    auto longest = runs[0];
    for (const auto& r : runs)
      if (r.second - r.first > longest.second - longest.first) longest = r;
    return longest;
  }
  const auto& run = rng ? fitting[rng->uniform_int(fitting.size())] : fitting[fitting.size() / 2];
  const int slack = (run.second - run.first) - want_frames;
  const int begin = run.first + (rng ? static_cast<int>(rng->uniform_int(slack + 1)) : slack / 2);
  return {begin, begin + want_frames};
}

template <typename Real>
struct TrainingExample {
  std::string clip_id;
  int chunk_begin = 0;
  Mat<Real> raw_features;
  std::vector<PromptSpec> specs;              // ptsd
  FrameLabelSet labels;
  std::vector<std::string> enroll_speakers;   // tsvad
  std::vector<Mat<Real>> enroll_features;     // tsvad
};

// Random clip, random chunk length and offset, labels derived for the chunk,
// prompts as available within it.
template <typename Real>
TrainingExample<Real> sample_training_example(ClipStore<Real>& store, const TrainConfig& cfg,
                                              ModelKind kind, Rng& rng) {
  if (store.size() == 0) throw ValidationError("empty training manifest");
  const auto& clip = store.get(rng.uniform_int(store.size()));
  const int t_full = clip.activity.n_frames;
  const double len_s = rng.uniform(cfg.chunk_min_s, cfg.chunk_max_s);
  const int chunk = std::min<int>(t_full, static_cast<int>(std::lround(len_s * FRAME_RATE)));
  const int begin =
      chunk < t_full ? static_cast<int>(rng.uniform_int(t_full - chunk + 1)) : 0;

  TrainingExample<Real> ex;
  ex.clip_id = clip.clip_id;
  ex.chunk_begin = begin;
  ex.raw_features = clip.raw_features.middleRows(begin, chunk);
  const ActivityMatrix act = slice_activity(clip.activity, begin, chunk);

  switch (kind) {
    case ModelKind::ptsd:
      ex.specs = sample_prompt_set(act, rng, cfg.max_prompts);
      ex.labels = build_label_set(ex.specs, act, clip.profiles);
      break;
    case ModelKind::tsvad: {
      const int want = std::max(1, static_cast<int>(std::lround(cfg.enroll_seconds * FRAME_RATE)));
      ex.labels.n_frames = act.n_frames;
      for (size_t s = 0; s < clip.activity.speakers.size(); ++s) {
        const auto [b, e] = pick_enrollment_frames(clip.activity, static_cast<int>(s), want, &rng);
        ex.enroll_speakers.push_back(clip.activity.speakers[s]);
        ex.enroll_features.push_back(clip.raw_features.middleRows(b, e - b));
        ex.labels.rows.emplace_back(enrollment_descriptor(clip.activity.speakers[s]),
                                    act.rows[s]);
      }
      break;
    }
    default: {  // gender baselines
      ex.specs = {PromptSpec::of_gender(Gender::female), PromptSpec::of_gender(Gender::male)};
      ex.labels = build_label_set(ex.specs, act, clip.profiles);
      break;
    }
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Validation: chunked inference, frames pooled per attribute and per value.
// ---------------------------------------------------------------------------

using EvalSummary = std::map<std::string, std::map<std::string, double>>;

inline std::string attribute_key(const EventDescriptor& d) {
  if (d.spec.kind == AttributeKind::timestamped_speaker && d.spec.anchor_frame < 0) return "E";
  return attribute_name(d.spec.kind);
}

inline std::string value_key(const EventDescriptor& d) {
  if (d.spec.kind == AttributeKind::timestamped_speaker) return attribute_key(d);
  EventDescriptor bare;
  bare.spec = d.spec;
  return bare.to_string();
}

// Accumulates posterior rows against their label rows under attribute- and
// value-level keys.
inline void pool_rows(std::map<std::string, ScoredFrames>& pooled, const PosteriorSet& post,
                      const FrameLabelSet& labels) {
  if (post.rows.size() != labels.rows.size())
    throw ValidationError("pool_rows: posterior/label row mismatch");
  for (size_t r = 0; r < post.rows.size(); ++r) {
    const auto& [desc, scores] = post.rows[r];
    const auto& row = labels.rows[r].second;
    ScoredFrames sf;
    sf.scores = scores;
    sf.labels = row;
    pooled[attribute_key(desc)].append(sf);
    const std::string vk = value_key(desc);
    if (vk != attribute_key(desc)) pooled[vk].append(sf);
  }
}

template <typename Real>
void pool_clip(Model<Real>& model, const ClipData<Real>& clip, double chunk_s,
               double enroll_seconds, std::map<std::string, ScoredFrames>& pooled) {
  const int t_full = clip.activity.n_frames;
  const int chunk_frames = std::max(1, static_cast<int>(std::lround(chunk_s * FRAME_RATE)));
  const ModelKind kind = model.config().kind;

  std::vector<std::pair<std::string, Mat<Real>>> enrollments;
  if (kind == ModelKind::tsvad) {
    const int want = std::max(1, static_cast<int>(std::lround(enroll_seconds * FRAME_RATE)));
    for (size_t s = 0; s < clip.activity.speakers.size(); ++s) {
      const auto [b, e] = pick_enrollment_frames(clip.activity, static_cast<int>(s), want, nullptr);
      enrollments.emplace_back(clip.activity.speakers[s], clip.raw_features.middleRows(b, e - b));
    }
  }

  for (int begin = 0; begin < t_full; begin += chunk_frames) {
    const int len = std::min(chunk_frames, t_full - begin);
    const ActivityMatrix act = slice_activity(clip.activity, begin, len);
    const Mat<Real> raw = clip.raw_features.middleRows(begin, len);
    if (kind == ModelKind::ptsd) {
      const auto specs = fixed_prompt_set(act);
      const PosteriorSet post = model.forward(raw, specs);
      pool_rows(pooled, post, build_label_set(specs, act, clip.profiles));
    } else if (kind == ModelKind::tsvad) {
      const PosteriorSet post = tsvad_forward(model, raw, enrollments);
      FrameLabelSet labels;
      labels.n_frames = len;
      for (size_t s = 0; s < act.speakers.size(); ++s)
        labels.rows.emplace_back(enrollment_descriptor(act.speakers[s]), act.rows[s]);
      pool_rows(pooled, post, labels);
    } else {
      const PosteriorSet post = gender_baseline_forward(model, raw);
      const std::vector<PromptSpec> specs = {PromptSpec::of_gender(Gender::female),
                                             PromptSpec::of_gender(Gender::male)};
      pool_rows(pooled, post, build_label_set(specs, act, clip.profiles));
    }
  }
}

inline EvalSummary summarize_pools(const std::map<std::string, ScoredFrames>& pooled) {
  EvalSummary out;
  for (const auto& [key, sf] : pooled) {
    std::map<std::string, double> m;
    try {
      m["ap"] = average_precision(sf);
    } catch (const ValidationError&) {
    }
    try {
      m["auc"] = roc_auc(sf);
      m["eer"] = eer(sf);
    } catch (const ValidationError&) {
    }
    if (!m.empty()) out[key] = std::move(m);
  }
  return out;
}

template <typename Real>
EvalSummary validate_model(Model<Real>& model, ClipStore<Real>& eval_store,
                           const TrainConfig& cfg) {
  std::map<std::string, ScoredFrames> pooled;
  for (size_t i = 0; i < eval_store.size(); ++i)
    pool_clip(model, eval_store.get(i), cfg.eval_chunk_s, cfg.enroll_seconds, pooled);
  return summarize_pools(pooled);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainResult {
  std::string last_checkpoint;
  std::string best_checkpoint;
  double best_mean_ap = -1.0;
  std::vector<nlohmann::json> log;
  std::vector<double> step_losses;  // every step, in order
};

template <typename Real>
nn::Var<Real> example_loss_graph(Model<Real>& model, nn::Tape<Real>& tape,
                                 const TrainingExample<Real>& ex) {
  nn::Var<Real> post;
  switch (model.config().kind) {
    case ModelKind::ptsd:
      post = model.posteriors_graph(tape, ex.raw_features, ex.specs);
      break;
    case ModelKind::tsvad:
      post = tsvad_posteriors_graph(model, tape, ex.raw_features, ex.enroll_features);
      break;
    default:
      post = gender_posteriors_graph(model, tape, ex.raw_features);
      break;
  }
  return tape.bce_mean(post, labels_matrix<Real>(ex.labels));
}

// Adam over BCE with per-epoch learning-rate decay; one checkpoint and one
// metrics record per epoch; best checkpoint tracked by mean validation AP.
template <typename Real>
TrainResult train_loop(Model<Real>& model, ClipStore<Real>& train_store,
                       std::type_identity_t<ClipStore<Real>>* eval_store, TrainConfig cfg,
                       const std::string& out_dir, const std::string& config_hash = "",
                       int start_epoch = 0, std::ostream* progress = nullptr) {
  cfg.validate();
  if (train_store.size() == 0) throw ValidationError("empty training manifest");
  std::filesystem::create_directories(out_dir);

  TrainResult result;
  const int steps =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : static_cast<int>(train_store.size());
  const std::string metrics_path = (std::filesystem::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, start_epoch > 0 ? std::ios::app : std::ios::trunc);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng::substream(cfg.seed, static_cast<uint64_t>(epoch));
    nn::AdamConfig adam;
    adam.lr = cfg.lr_at_epoch(epoch);
    adam.clip_norm = cfg.grad_clip;

    double loss_sum = 0.0;
    long loss_count = 0;
    for (int step = 0; step < steps; ++step) {
      model.params().zero_grads();
      for (int b = 0; b < cfg.batch_size; ++b) {
        const auto ex = sample_training_example(train_store, cfg, model.config().kind, rng);
        nn::Tape<Real> tape(true, &rng);
        auto loss = example_loss_graph(model, tape, ex);
        const double loss_value = static_cast<double>(loss->value(0, 0));
        if (!std::isfinite(loss_value))
          throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(step) + " on clip " + ex.clip_id);
        loss_sum += loss_value;
        ++loss_count;
        result.step_losses.push_back(loss_value);
        tape.backward(tape.scale(loss, static_cast<Real>(1.0 / cfg.batch_size)));
      }
      model.params().adam_step(adam);
    }

    nlohmann::json record;
    record["epoch"] = epoch;
    record["lr"] = adam.lr;
    record["loss"] = loss_count > 0 ? loss_sum / loss_count : 0.0;
    record["config_hash"] = config_hash;

    double mean_ap = 0.0;
    if (eval_store) {
      const EvalSummary summary = validate_model(model, *eval_store, cfg);
      nlohmann::json vj;
      int n_attr = 0;
      for (const auto& [key, metrics_map] : summary) {
        for (const auto& [name, value] : metrics_map) vj[key][name] = value;
        const bool attr_level = key.find(':') == std::string::npos;
        if (attr_level && metrics_map.count("ap")) {
          mean_ap += metrics_map.at("ap");
          ++n_attr;
        }
      }
      if (n_attr > 0) mean_ap /= n_attr;
      record["validation"] = vj;
      record["mean_ap"] = mean_ap;
    }

    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.bin", epoch + 1);
    const std::string ckpt_path = (std::filesystem::path(out_dir) / name).string();
    save_checkpoint(ckpt_path, model, epoch + 1, config_hash);
    result.last_checkpoint = ckpt_path;
    if (!eval_store || mean_ap > result.best_mean_ap) {
      result.best_mean_ap = mean_ap;
      result.best_checkpoint = (std::filesystem::path(out_dir) / "best.bin").string();
      std::filesystem::copy_file(ckpt_path, result.best_checkpoint,
                                 std::filesystem::copy_options::overwrite_existing);
    }

    metrics << record.dump() << "\n";
    metrics.flush();
    result.log.push_back(std::move(record));
    if (progress)
      (*progress) << "epoch " << epoch << " lr " << adam.lr << " loss "
                  << (loss_count > 0 ? loss_sum / loss_count : 0.0) << " mean_ap " << mean_ap
                  << std::endl;
  }
  return result;
}

// Resume helper: rebuilds the model from a checkpoint and continues training.
template <typename Real>
TrainResult resume_training(const std::string& checkpoint_path, ClipStore<Real>& train_store,
                            ClipStore<Real>* eval_store, const TrainConfig& cfg,
                            const std::string& out_dir, Model<Real>& model,
                            std::ostream* progress = nullptr) {
  const CheckpointHeader h = load_checkpoint(checkpoint_path, model);
  return train_loop(model, train_store, eval_store, cfg, out_dir, h.config_hash, h.epoch,
                    progress);
}

}  // namespace ptsd
