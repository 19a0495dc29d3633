#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "ptsd/model.hpp"
#include "ptsd/report.hpp"
#include "ptsd/train.hpp"

namespace ptsd {

// Merged run configuration (frontend, model, train, eval sections). Unknown
// keys are rejected; the merged form is echoed into run outputs and hashed
// for provenance.
struct RunConfig {
  ModelConfig model;  // carries the frontend config
  TrainConfig train;
  ScoreOptions eval;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["frontend"] = {{"kind", to_string(model.frontend.kind)},
                     {"n_mels", model.frontend.n_mels},
                     {"adapter_name", model.frontend.adapter_name}};
    j["model"] = {{"d_model", model.d_model},
                  {"n_heads", model.n_heads},
                  {"n_encoder_layers", model.n_encoder_layers},
                  {"n_decoder_layers", model.n_decoder_layers},
                  {"ff_multiple", model.ff_multiple},
                  {"dropout", model.dropout},
                  {"query_interaction", to_string(model.query_interaction)},
                  {"kind", to_string(model.kind)}};
    j["train"] = {{"lr0", train.lr0},
                  {"decay", train.decay},
                  {"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"steps_per_epoch", train.steps_per_epoch},
                  {"chunk_min_s", train.chunk_min_s},
                  {"chunk_max_s", train.chunk_max_s},
                  {"eval_chunk_s", train.eval_chunk_s},
                  {"seed", train.seed},
                  {"max_prompts", train.max_prompts},
                  {"grad_clip", train.grad_clip},
                  {"enroll_seconds", train.enroll_seconds}};
    j["eval"] = {{"threshold", eval.threshold},
                 {"median_window", eval.median_window},
                 {"collar", eval.collar},
                 {"score_overlap", eval.score_overlap}};
    return j;
  }

  static void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key()))
        throw ValidationError("unknown config key '" + where + "." + it.key() + "'");
  }

  // Applies a (possibly partial) JSON document on top of the defaults.
  void merge_json(const nlohmann::json& j) {
    check_keys(j, {"frontend", "model", "train", "eval"}, "config");
    if (j.contains("frontend")) {
      const auto& f = j.at("frontend");
      check_keys(f, {"kind", "n_mels", "adapter_name"}, "frontend");
      if (f.contains("kind"))
        model.frontend.kind = frontend_kind_from_string(f.at("kind").get<std::string>());
      if (f.contains("n_mels")) model.frontend.n_mels = f.at("n_mels").get<int>();
      if (f.contains("adapter_name"))
        model.frontend.adapter_name = f.at("adapter_name").get<std::string>();
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m,
                 {"d_model", "n_heads", "n_encoder_layers", "n_decoder_layers", "ff_multiple",
                  "dropout", "query_interaction", "kind"},
                 "model");
      if (m.contains("d_model")) model.d_model = m.at("d_model").get<int>();
      if (m.contains("n_heads")) model.n_heads = m.at("n_heads").get<int>();
      if (m.contains("n_encoder_layers"))
        model.n_encoder_layers = m.at("n_encoder_layers").get<int>();
      if (m.contains("n_decoder_layers"))
        model.n_decoder_layers = m.at("n_decoder_layers").get<int>();
      if (m.contains("ff_multiple")) model.ff_multiple = m.at("ff_multiple").get<int>();
      if (m.contains("dropout")) model.dropout = m.at("dropout").get<double>();
      if (m.contains("query_interaction"))
        model.query_interaction =
            query_interaction_from_string(m.at("query_interaction").get<std::string>());
      if (m.contains("kind")) model.kind = model_kind_from_string(m.at("kind").get<std::string>());
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t,
                 {"lr0", "decay", "batch_size", "epochs", "steps_per_epoch", "chunk_min_s",
                  "chunk_max_s", "eval_chunk_s", "seed", "max_prompts", "grad_clip",
                  "enroll_seconds"},
                 "train");
      if (t.contains("lr0")) train.lr0 = t.at("lr0").get<double>();
      if (t.contains("decay")) train.decay = t.at("decay").get<double>();
      if (t.contains("batch_size")) train.batch_size = t.at("batch_size").get<int>();
      if (t.contains("epochs")) train.epochs = t.at("epochs").get<int>();
      if (t.contains("steps_per_epoch")) train.steps_per_epoch = t.at("steps_per_epoch").get<int>();
      if (t.contains("chunk_min_s")) train.chunk_min_s = t.at("chunk_min_s").get<double>();
      if (t.contains("chunk_max_s")) train.chunk_max_s = t.at("chunk_max_s").get<double>();
      if (t.contains("eval_chunk_s")) train.eval_chunk_s = t.at("eval_chunk_s").get<double>();
      if (t.contains("seed")) train.seed = t.at("seed").get<uint64_t>();
      if (t.contains("max_prompts")) train.max_prompts = t.at("max_prompts").get<int>();
      if (t.contains("grad_clip")) train.grad_clip = t.at("grad_clip").get<double>();
      if (t.contains("enroll_seconds")) train.enroll_seconds = t.at("enroll_seconds").get<double>();
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      check_keys(e, {"threshold", "median_window", "collar", "score_overlap"}, "eval");
      if (e.contains("threshold")) eval.threshold = e.at("threshold").get<double>();
      if (e.contains("median_window")) eval.median_window = e.at("median_window").get<int>();
      if (e.contains("collar")) eval.collar = e.at("collar").get<double>();
      if (e.contains("score_overlap")) eval.score_overlap = e.at("score_overlap").get<bool>();
    }
    model.frontend.d_model = model.d_model;
  }

  // FNV-1a of the canonical dump; stamped on checkpoints, dumps and logs.
  std::string hash() const {
    const std::string text = to_json().dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

}  // namespace ptsd
