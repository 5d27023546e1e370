#pragma once

// Self-contained model checkpoints: a JSON header (model configuration,
// precision, parameter inventory, type table, value vocabulary) followed by
// raw little-endian weight buffers. Weights are stored as binary64 regardless
// of the training precision, so a double round-trip is bit-exact and a float
// round-trip is value-exact. Optimizer moments are not stored.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptrmix/model.hpp"
#include "ptrmix/vocab.hpp"

namespace ptrmix {

inline constexpr char kCheckpointMagic[8] = {'P', 'M', 'X', 'C', 'K', 'P', 'T', '1'};

struct CheckpointMeta {
  ModelConfig config;
  std::string precision;  // "double" or "float": what the model trained in
  std::vector<std::string> type_names;
  Vocabulary vocab;
};

namespace detail {

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"hidden", cfg.hidden},
          {"window", cfg.window},
          {"type_dim", cfg.type_dim},
          {"value_dim", cfg.value_dim},
          {"type_vocab", cfg.type_vocab},
          {"value_vocab", cfg.value_vocab},
          {"mode", mode_name(cfg.mode)},
          {"task", task_name(cfg.task)},
          {"use_parent_attention", cfg.use_parent_attention}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.hidden = j.at("hidden").get<std::size_t>();
  cfg.window = j.at("window").get<std::size_t>();
  cfg.type_dim = j.at("type_dim").get<std::size_t>();
  cfg.value_dim = j.at("value_dim").get<std::size_t>();
  cfg.type_vocab = j.at("type_vocab").get<std::size_t>();
  cfg.value_vocab = j.at("value_vocab").get<std::size_t>();
  auto mode = mode_from_name(j.at("mode").get<std::string>());
  auto task = task_from_name(j.at("task").get<std::string>());
  if (!mode || !task) throw IoError("checkpoint: unknown mode or task name");
  cfg.mode = *mode;
  cfg.task = *task;
  cfg.use_parent_attention = j.at("use_parent_attention").get<bool>();
  return cfg;
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

template <class Real>
void save_checkpoint(const std::string& path, const ModelParams<Real>& params,
                     const std::vector<std::string>& type_names, const Vocabulary& vocab) {
  nlohmann::json header;
  header["config"] = detail::config_to_json(params.config);
  header["precision"] = sizeof(Real) == 8 ? "double" : "float";
  header["type_names"] = type_names;
  nlohmann::json words = nlohmann::json::array();
  for (std::size_t i = 0; i < vocab.words.size(); ++i)
    words.push_back({vocab.words[i], vocab.frequencies[i]});
  header["vocab"] = {{"k", vocab.configured_k}, {"words", words}};
  nlohmann::json inv = nlohmann::json::array();
  for (const auto& p : params.store) inv.push_back({{"name", p.name}, {"shape", p.shape}});
  header["params"] = inv;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kCheckpointMagic, 8);
  const std::string hs = header.dump();
  detail::write_u64(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : params.store) {
    detail::write_u64(out, p.value.size());
    for (Real v : p.value) detail::write_f64(out, static_cast<double>(v));
  }
  if (!out) throw IoError("write failed for " + path);
}

inline nlohmann::json read_checkpoint_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw IoError(path + " is not a checkpoint file");
  const std::uint64_t len = detail::read_u64(in);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path + ": truncated checkpoint header");
  return nlohmann::json::parse(hs);
}

inline CheckpointMeta load_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  const nlohmann::json header = read_checkpoint_header(in, path);
  CheckpointMeta meta;
  meta.config = detail::config_from_json(header.at("config"));
  meta.precision = header.at("precision").get<std::string>();
  meta.type_names = header.at("type_names").get<std::vector<std::string>>();
  meta.vocab.configured_k = header.at("vocab").at("k").get<std::size_t>();
  for (const auto& entry : header.at("vocab").at("words")) {
    meta.vocab.words.push_back(entry.at(0).get<std::string>());
    meta.vocab.frequencies.push_back(entry.at(1).get<std::uint64_t>());
  }
  meta.vocab.rebuild_index();
  return meta;
}

template <class Real>
ModelParams<Real> load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  const nlohmann::json header = read_checkpoint_header(in, path);
  CheckpointMeta meta;
  meta.config = detail::config_from_json(header.at("config"));
  meta.precision = header.at("precision").get<std::string>();
  meta.type_names = header.at("type_names").get<std::vector<std::string>>();
  meta.vocab.configured_k = header.at("vocab").at("k").get<std::size_t>();
  for (const auto& entry : header.at("vocab").at("words")) {
    meta.vocab.words.push_back(entry.at(0).get<std::string>());
    meta.vocab.frequencies.push_back(entry.at(1).get<std::uint64_t>());
  }
  meta.vocab.rebuild_index();

  // Allocate the parameter set for this configuration, then overwrite every
  // buffer with the stored weights, cross-checking the inventory.
  Rng scratch(0);
  auto params = ModelParams<Real>::init(meta.config, scratch);
  const auto& inv = header.at("params");
  if (inv.size() != params.store.size())
    throw IoError(path + ": checkpoint has " + std::to_string(inv.size()) +
                  " parameters, the configuration needs " + std::to_string(params.store.size()));
  std::size_t i = 0;
  for (auto& p : params.store) {
    const auto& rec = inv.at(i++);
    if (rec.at("name").get<std::string>() != p.name ||
        rec.at("shape").get<Shape>() != p.shape)
      throw IoError(path + ": parameter " + p.name + " does not match the stored inventory");
    const std::uint64_t count = detail::read_u64(in);
    if (count != p.value.size())
      throw IoError(path + ": parameter " + p.name + " has " + std::to_string(count) +
                    " stored values, expected " + std::to_string(p.value.size()));
    for (auto& v : p.value) v = static_cast<Real>(detail::read_f64(in));
  }
  if (!in) throw IoError(path + ": truncated checkpoint payload");
  if (meta_out) *meta_out = std::move(meta);
  return params;
}

}  // namespace ptrmix
