#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptsd/model.hpp"
#include "ptsd/nn/params.hpp"

namespace ptsd {

// Versioned binary checkpoint: magic, version, JSON config header, then named
// parameter blocks (values + Adam moments) in registration order. Re-saving a
// loaded checkpoint reproduces it byte for byte.

constexpr char CHECKPOINT_MAGIC[8] = {'P', 'T', 'S', 'D', 'C', 'K', 'P', 'T'};
constexpr uint32_t CHECKPOINT_VERSION = 1;

template <typename Real>
constexpr const char* dtype_name() {
  if constexpr (sizeof(Real) == 8) return "f64";
  else return "f32";
}

inline nlohmann::json model_config_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"d_model", cfg.d_model},
      {"n_heads", cfg.n_heads},
      {"n_encoder_layers", cfg.n_encoder_layers},
      {"n_decoder_layers", cfg.n_decoder_layers},
      {"ff_multiple", cfg.ff_multiple},
      {"dropout", cfg.dropout},
      {"query_interaction", to_string(cfg.query_interaction)},
      {"kind", to_string(cfg.kind)},
      {"frontend",
       {{"kind", to_string(cfg.frontend.kind)},
        {"n_mels", cfg.frontend.n_mels},
        {"frame_rate", FRAME_RATE},
        {"adapter_name", cfg.frontend.adapter_name}}},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.n_encoder_layers = j.at("n_encoder_layers").get<int>();
  cfg.n_decoder_layers = j.at("n_decoder_layers").get<int>();
  cfg.ff_multiple = j.at("ff_multiple").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.query_interaction = query_interaction_from_string(j.at("query_interaction").get<std::string>());
  cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
  const auto& fe = j.at("frontend");
  cfg.frontend.kind = frontend_kind_from_string(fe.at("kind").get<std::string>());
  cfg.frontend.n_mels = fe.at("n_mels").get<int>();
  cfg.frontend.adapter_name = fe.value("adapter_name", std::string());
  cfg.frontend.d_model = cfg.d_model;
  return cfg;
}

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

template <typename Real>
void put_block(std::ostream& os, const std::string& name, const Mat<Real>& m) {
  put_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<uint32_t>(m.rows()));
  put_u32(os, static_cast<uint32_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(Real) * m.size()));
}

template <typename Real>
std::pair<std::string, Mat<Real>> get_block(std::istream& is) {
  const uint32_t name_len = get_u32(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  const uint32_t rows = get_u32(is);
  const uint32_t cols = get_u32(is);
  Mat<Real> m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(Real) * m.size()));
  if (!is) throw std::runtime_error("checkpoint truncated while reading block " + name);
  return {name, std::move(m)};
}

}  // namespace detail

struct CheckpointHeader {
  ModelConfig model;
  std::string dtype;
  int epoch = 0;
  long adam_step = 0;
  std::string config_hash;
  nlohmann::json raw;  // full header as stored
};

template <typename Real>
void save_checkpoint(const std::string& path, const Model<Real>& model, int epoch = 0,
                     const std::string& config_hash = "") {
  nlohmann::json header;
  header["format"] = "ptsd-checkpoint";
  header["version"] = CHECKPOINT_VERSION;
  header["dtype"] = dtype_name<Real>();
  header["model"] = model_config_json(model.config());
  header["train_state"] = {{"epoch", epoch}, {"adam_step", model.params().step_count()}};
  header["config_hash"] = config_hash;
  const std::string header_text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(CHECKPOINT_MAGIC, 8);
  detail::put_u32(os, CHECKPOINT_VERSION);
  detail::put_u32(os, static_cast<uint32_t>(header_text.size()));
  os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  const auto& params = model.params().all();
  detail::put_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_block<Real>(os, p->name, p->value);
    const bool with_adam = p->m.size() > 0;
    detail::put_u32(os, with_adam ? 1 : 0);
    if (with_adam) {
      detail::put_block<Real>(os, p->name + ".adam.m", p->m);
      detail::put_block<Real>(os, p->name + ".adam.v", p->v);
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline CheckpointHeader read_checkpoint_header(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, CHECKPOINT_MAGIC, 8) != 0)
    throw std::runtime_error(path + ": not a ptsd checkpoint");
  const uint32_t version = detail::get_u32(is);
  if (version != CHECKPOINT_VERSION)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  const uint32_t header_len = detail::get_u32(is);
  std::string text(header_len, '\0');
  is.read(text.data(), header_len);
  CheckpointHeader h;
  h.raw = nlohmann::json::parse(text);
  h.model = model_config_from_json(h.raw.at("model"));
  h.dtype = h.raw.at("dtype").get<std::string>();
  h.epoch = h.raw.at("train_state").at("epoch").get<int>();
  h.adam_step = h.raw.at("train_state").at("adam_step").get<long>();
  h.config_hash = h.raw.value("config_hash", std::string());
  return h;
}

inline CheckpointHeader peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_checkpoint_header(is, path);
}

// Differences between a stored and an expected config, for loader errors.
inline std::string config_diff(const nlohmann::json& stored, const nlohmann::json& expected,
                               const std::string& prefix = "") {
  std::string diff;
  for (auto it = expected.begin(); it != expected.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!stored.contains(it.key())) {
      diff += "  " + key + ": missing in checkpoint\n";
    } else if (it.value().is_object()) {
      diff += config_diff(stored.at(it.key()), it.value(), key);
    } else if (stored.at(it.key()) != it.value()) {
      diff += "  " + key + ": checkpoint=" + stored.at(it.key()).dump() +
              " expected=" + it.value().dump() + "\n";
    }
  }
  return diff;
}

// Loads parameters (and Adam state) into an existing model; the stored config
// must match the model's.
template <typename Real>
CheckpointHeader load_checkpoint(const std::string& path, Model<Real>& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  CheckpointHeader h = read_checkpoint_header(is, path);
  if (h.dtype != dtype_name<Real>())
    throw std::runtime_error(path + ": dtype mismatch: checkpoint=" + h.dtype + " expected=" +
                             dtype_name<Real>());
  const nlohmann::json expected = model_config_json(model.config());
  if (h.raw.at("model") != expected) {
    throw std::runtime_error(path + ": config mismatch:\n" +
                             config_diff(h.raw.at("model"), expected));
  }
  const uint32_t count = detail::get_u32(is);
  if (count != model.params().all().size())
    throw std::runtime_error(path + ": parameter count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, value] = detail::get_block<Real>(is);
    auto& p = model.params().get(name);
    if (p.value.rows() != value.rows() || p.value.cols() != value.cols())
      throw std::runtime_error(path + ": shape mismatch for " + name);
    p.value = std::move(value);
    if (detail::get_u32(is)) {
      p.m = detail::get_block<Real>(is).second;
      p.v = detail::get_block<Real>(is).second;
    }
  }
  model.params().set_step_count(h.adam_step);
  return h;
}

}  // namespace ptsd
