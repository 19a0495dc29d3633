// ptsd: simulate -> train -> infer -> score, with reproducible seeds.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ptsd/config.hpp"
#include "ptsd/infer.hpp"
#include "ptsd/report.hpp"
#include "ptsd/simulate.hpp"
#include "ptsd/train.hpp"

namespace {

using Real = double;

struct SimulateArgs {
  int n_speakers = 2;
  int clips = 10;
  double duration = 60.0;
  uint64_t seed = 1;
  std::string out;
  double overlap_prob = -1.0;  // <0 = default
  double utt_min = -1.0, utt_max = -1.0;
};

int cmd_simulate(const SimulateArgs& args) {
  if (args.n_speakers < 2 || args.n_speakers > 4)
    throw ptsd::ValidationError("--n-speakers must be one of {2, 3, 4}");
  ptsd::ConversationStats stats;
  if (args.overlap_prob >= 0.0) stats.overlap_probability = args.overlap_prob;
  if (args.utt_min > 0.0) stats.utterance_min = args.utt_min;
  if (args.utt_max > 0.0) stats.utterance_max = args.utt_max;
  const auto manifest =
      ptsd::build_dataset(stats, args.n_speakers, args.clips, args.duration, args.out, args.seed);
  std::cout << "wrote " << manifest.records.size() << " clips under " << args.out << "\n"
            << "manifest: " << manifest.path << "\n";
  return 0;
}

struct TrainArgs {
  std::string train_manifest, val_manifest, out, config_path, resume;
  std::string model_kind = "ptsd";
  int epochs = -1;
  long seed = -1;
  double lr = -1.0;
  int batch_size = -1;
  int steps_per_epoch = -1;
  int d_model = -1;
  double chunk_min = -1.0, chunk_max = -1.0;
};

ptsd::RunConfig merged_config(const std::string& config_path) {
  ptsd::RunConfig cfg;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::runtime_error("cannot open config: " + config_path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ptsd::ValidationError(config_path + ": " + e.what());
    }
    cfg.merge_json(j);
  }
  return cfg;
}

int cmd_train(const TrainArgs& args) {
  ptsd::RunConfig cfg = merged_config(args.config_path);
  cfg.model.kind = ptsd::model_kind_from_string(args.model_kind);
  if (args.epochs >= 0) cfg.train.epochs = args.epochs;
  if (args.seed >= 0) cfg.train.seed = static_cast<uint64_t>(args.seed);
  if (args.lr > 0.0) cfg.train.lr0 = args.lr;
  if (args.batch_size > 0) cfg.train.batch_size = args.batch_size;
  if (args.steps_per_epoch >= 0) cfg.train.steps_per_epoch = args.steps_per_epoch;
  if (args.d_model > 0) cfg.model.d_model = args.d_model;
  if (args.chunk_min > 0.0) cfg.train.chunk_min_s = args.chunk_min;
  if (args.chunk_max > 0.0) cfg.train.chunk_max_s = args.chunk_max;
  cfg.model.frontend.d_model = cfg.model.d_model;
  cfg.train.validate();
  cfg.model.validate();

  std::filesystem::create_directories(args.out);
  {
    std::ofstream echo(std::filesystem::path(args.out) / "run_config.json");
    echo << cfg.to_json().dump(2) << "\n";
  }

  const auto train_manifest = ptsd::read_manifest(args.train_manifest);
  ptsd::ClipStore<Real> train_store(train_manifest, cfg.model.frontend);
  std::unique_ptr<ptsd::ClipStore<Real>> eval_store;
  if (!args.val_manifest.empty())
    eval_store = std::make_unique<ptsd::ClipStore<Real>>(ptsd::read_manifest(args.val_manifest),
                                                         cfg.model.frontend);

  ptsd::Model<Real> model(cfg.model, cfg.train.seed);
  int start_epoch = 0;
  if (!args.resume.empty()) {
    const auto header = ptsd::load_checkpoint(args.resume, model);
    start_epoch = header.epoch;
    std::cout << "resumed from " << args.resume << " at epoch " << start_epoch << "\n";
  }

  const auto result = ptsd::train_loop(model, train_store, eval_store.get(), cfg.train, args.out,
                                       cfg.hash(), start_epoch, &std::cout);
  std::cout << "last checkpoint: " << result.last_checkpoint << "\n";
  if (!result.best_checkpoint.empty())
    std::cout << "best checkpoint: " << result.best_checkpoint << " (mean AP "
              << result.best_mean_ap << ")\n";
  return 0;
}

struct InferArgs {
  std::string checkpoint, manifest_path, prompts, out;
  double chunk_seconds = 40.0;
};

struct PromptFile {
  std::vector<ptsd::PromptSpec> global;
  std::map<std::string, std::vector<double>> anchors;  // clip -> anchor seconds
  std::map<std::string, std::vector<ptsd::EnrollmentSpec>> enrollments;
};

PromptFile parse_prompt_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open prompts file: " + path);
  PromptFile out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "T") {
      std::string clip;
      double seconds;
      if (!(ls >> clip >> seconds) || seconds < 0.0)
        throw ptsd::ValidationError(where + ": expected 'T <clip_id> <seconds>'");
      out.anchors[clip].push_back(seconds);
    } else if (tag == "G") {
      std::string value;
      if (!(ls >> value)) throw ptsd::ValidationError(where + ": expected 'G female|male'");
      out.global.push_back(ptsd::PromptSpec::of_gender(ptsd::gender_from_string(value)));
    } else if (tag == "N") {
      std::string value;
      if (!(ls >> value))
        throw ptsd::ValidationError(where + ": expected 'N non-speech|single|overlap'");
      out.global.push_back(ptsd::PromptSpec::of_count(ptsd::count_class_from_string(value)));
    } else if (tag == "K") {
      out.global.push_back(ptsd::PromptSpec::keynote());
    } else if (tag == "E") {
      ptsd::EnrollmentSpec e;
      if (!(ls >> e.clip_id >> e.speaker_id >> e.onset >> e.offset) || e.offset <= e.onset)
        throw ptsd::ValidationError(where +
                                    ": expected 'E <clip_id> <speaker_id> <onset> <offset>'");
      out.enrollments[e.clip_id].push_back(e);
    } else {
      throw ptsd::ValidationError(where + ": unknown prompt line '" + tag + "'");
    }
  }
  return out;
}

int cmd_infer(const InferArgs& args) {
  const auto header = ptsd::peek_checkpoint(args.checkpoint);
  ptsd::Model<Real> model(header.model, 0);
  ptsd::load_checkpoint(args.checkpoint, model);
  const PromptFile prompts = parse_prompt_file(args.prompts);

  const auto manifest = ptsd::read_manifest(args.manifest_path);
  ptsd::ClipStore<Real> store(manifest, model.config().frontend);

  ptsd::ScoreDump dump;
  dump.chunk_seconds = args.chunk_seconds;
  dump.config_hash = header.config_hash;

  for (size_t i = 0; i < store.size(); ++i) {
    const auto& clip = store.get(i);
    const ptsd::ModelKind kind = model.config().kind;
    if (kind == ptsd::ModelKind::ptsd) {
      std::vector<ptsd::PromptSpec> specs;
      auto it = prompts.anchors.find(clip.clip_id);
      if (it != prompts.anchors.end())
        for (double sec : it->second)
          specs.push_back(ptsd::PromptSpec::timestamped(ptsd::time_to_frame(sec)));
      specs.insert(specs.end(), prompts.global.begin(), prompts.global.end());
      if (specs.empty())
        throw ptsd::ValidationError("no prompts apply to clip '" + clip.clip_id + "'");
      const auto post = ptsd::chunked_infer(model, clip.raw_features, specs, args.chunk_seconds,
                                            &clip.activity);
      for (const auto& [desc, values] : post.rows) dump.rows.emplace_back(clip.clip_id, desc, values);
    } else if (kind == ptsd::ModelKind::tsvad) {
      auto it = prompts.enrollments.find(clip.clip_id);
      if (it == prompts.enrollments.end())
        throw ptsd::ValidationError("no enrollment lines for clip '" + clip.clip_id + "'");
      std::vector<std::pair<std::string, ptsd::Mat<Real>>> enrollments;
      for (const auto& e : it->second) {
        const int b = ptsd::time_to_frame(e.onset), en = ptsd::time_to_frame(e.offset);
        if (en <= b || en > clip.activity.n_frames)
          throw ptsd::ValidationError("enrollment segment out of range for clip '" + clip.clip_id +
                                      "'");
        enrollments.emplace_back(e.speaker_id, clip.raw_features.middleRows(b, en - b));
      }
      const auto post = ptsd::chunked_tsvad(model, clip.raw_features, enrollments,
                                            args.chunk_seconds);
      for (const auto& [desc, values] : post.rows) dump.rows.emplace_back(clip.clip_id, desc, values);
    } else {
      const auto post = ptsd::chunked_gender(model, clip.raw_features, args.chunk_seconds);
      for (const auto& [desc, values] : post.rows) dump.rows.emplace_back(clip.clip_id, desc, values);
    }
  }

  ptsd::write_score_dump(args.out, dump);
  std::cout << "wrote " << dump.rows.size() << " score rows to " << args.out << "\n";
  return 0;
}

struct ScoreArgs {
  std::vector<std::string> dumps;
  std::string manifest_path, out, dataset = "eval";
  std::vector<std::string> metrics;
  double collar = 0.25;
  bool no_overlap = false;
  double threshold = 0.5;
  int median = 11;
  bool per_clip = false;
};

int cmd_score(const ScoreArgs& args) {
  const auto manifest = ptsd::read_manifest(args.manifest_path);
  ptsd::ScoreOptions opt;
  opt.collar = args.collar;
  opt.score_overlap = !args.no_overlap;
  opt.threshold = args.threshold;
  opt.median_window = args.median;
  opt.per_clip = args.per_clip;
  for (const auto& m : args.metrics)
    if (m != "all") opt.metrics.insert(m);

  std::vector<ptsd::ScoreDump> dumps;
  for (const auto& path : args.dumps) dumps.push_back(ptsd::read_score_dump(path));
  for (size_t i = 1; i < dumps.size(); ++i)
    if (dumps[i].frame_rate != dumps[0].frame_rate)
      throw ptsd::ValidationError("refusing to mix dumps with different frame rates (" +
                                  std::to_string(dumps[0].frame_rate) + " vs " +
                                  std::to_string(dumps[i].frame_rate) + ")");

  std::vector<ptsd::ReportRecord> records;
  std::string header = "# ptsd-report";
  for (size_t i = 0; i < dumps.size(); ++i) {
    ptsd::ScoreOptions o = opt;
    o.dataset = dumps.size() == 1 ? args.dataset
                                  : std::filesystem::path(args.dumps[i]).stem().string();
    header += " config:" + o.dataset + "=" +
              (dumps[i].config_hash.empty() ? "none" : dumps[i].config_hash);
    const auto part = ptsd::score_dump_report(dumps[i], manifest, o);
    records.insert(records.end(), part.begin(), part.end());
  }

  std::cout << header << "\n";
  for (const auto& r : records) std::cout << ptsd::report_line(r) << "\n";
  if (!args.out.empty()) {
    std::ofstream f(args.out);
    if (!f) throw std::runtime_error("cannot open for writing: " + args.out);
    f << header << "\n";
    for (const auto& r : records) f << ptsd::report_line(r) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt-driven target speech diarization"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic conversation dataset");
  sim_cmd->add_option("--n-speakers", sim.n_speakers, "speakers per clip (2-4)");
  sim_cmd->add_option("--clips", sim.clips, "number of clips");
  sim_cmd->add_option("--duration", sim.duration, "clip duration in seconds");
  sim_cmd->add_option("--seed", sim.seed, "random seed");
  sim_cmd->add_option("--out", sim.out, "output directory")->required();
  sim_cmd->add_option("--overlap-prob", sim.overlap_prob, "turn overlap probability");
  sim_cmd->add_option("--utt-min", sim.utt_min, "min utterance seconds");
  sim_cmd->add_option("--utt-max", sim.utt_max, "max utterance seconds");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model on a simulated dataset");
  train_cmd->add_option("--train-manifest", tr.train_manifest)->required();
  train_cmd->add_option("--val-manifest", tr.val_manifest);
  train_cmd->add_option("--out", tr.out, "run output directory")->required();
  train_cmd->add_option("--config", tr.config_path, "JSON run config");
  train_cmd->add_option("--model-kind", tr.model_kind, "ptsd|tsvad|baseline1|baseline2");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--steps-per-epoch", tr.steps_per_epoch);
  train_cmd->add_option("--d-model", tr.d_model);
  train_cmd->add_option("--chunk-min", tr.chunk_min);
  train_cmd->add_option("--chunk-max", tr.chunk_max);
  train_cmd->add_option("--resume", tr.resume, "checkpoint to resume from");

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "score prompts against clips");
  infer_cmd->add_option("--checkpoint", inf.checkpoint)->required();
  infer_cmd->add_option("--manifest", inf.manifest_path)->required();
  infer_cmd->add_option("--prompts", inf.prompts, "prompt spec file")->required();
  infer_cmd->add_option("--out", inf.out, "score dump path")->required();
  infer_cmd->add_option("--chunk-seconds", inf.chunk_seconds);

  ScoreArgs sc;
  auto* score_cmd = app.add_subcommand("score", "evaluate a score dump against references");
  score_cmd->add_option("--dump", sc.dumps, "score dump (repeatable)")->required();
  score_cmd->add_option("--manifest", sc.manifest_path)->required();
  score_cmd->add_option("--out", sc.out, "report path");
  score_cmd->add_option("--metric", sc.metrics, "ap|auc|eer|der|precision|recall|all (repeatable)");
  score_cmd->add_option("--collar", sc.collar, "DER collar seconds");
  score_cmd->add_flag("--no-overlap", sc.no_overlap, "exclude reference overlap regions from DER");
  score_cmd->add_option("--threshold", sc.threshold, "binarization threshold");
  score_cmd->add_option("--median", sc.median, "median filter window (odd)");
  score_cmd->add_flag("--per-clip", sc.per_clip, "also emit per-clip records");
  score_cmd->add_option("--dataset", sc.dataset, "dataset label in the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim_cmd->parsed()) return cmd_simulate(sim);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (infer_cmd->parsed()) return cmd_infer(inf);
    if (score_cmd->parsed()) return cmd_score(sc);
  } catch (const ptsd::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
