#pragma once
// Checkpoint directory: manifest.json (shapes, configs, vocabulary hash,
// epoch, validation MSE) plus one raw little-endian float32 file per
// parameter array.

#include "carp/array_io.hpp"
#include "carp/model.hpp"

#include <filesystem>
#include <optional>

namespace carp {

struct Checkpoint {
  ModelConfig model;
  ModelParams<float> params;
  nlohmann::json train_config;  // opaque copy of the training configuration
  std::uint64_t vocab_hash = 0;
  int epoch = 0;
  double validation_mse = 0;
};

inline std::string param_file_name(const std::string& name) { return name + ".f32"; }

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["model"] = to_json(ck.model);
  m["train"] = ck.train_config;
  m["vocab_hash"] = std::to_string(ck.vocab_hash);
  m["epoch"] = ck.epoch;
  m["validation_mse"] = ck.validation_mse;
  m["dtype"] = "float32";
  m["byte_order"] = "little";
  ck.params.visit([&](const std::string& name, const Matrix<float>& a) {
    m["params"].push_back({{"name", name}, {"shape", {a.rows(), a.cols()}}, {"file", param_file_name(name)}});
    io::write_raw(dir / param_file_name(name), a.data(), static_cast<std::size_t>(a.size()));
  });
  io::write_json(dir / "manifest.json", m);
}

/// Loads a checkpoint; when `expected_vocab_hash` is given a mismatch is fatal.
inline Checkpoint load_checkpoint(const std::filesystem::path& dir,
                                  std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
  const auto m = io::read_json(dir / "manifest.json");
  Checkpoint ck;
  ck.model = model_config_from_json(m.at("model"));
  ck.train_config = m.value("train", nlohmann::json::object());
  ck.vocab_hash = std::stoull(m.at("vocab_hash").get<std::string>());
  ck.epoch = m.at("epoch").get<int>();
  ck.validation_mse = m.at("validation_mse").get<double>();
  if (expected_vocab_hash && *expected_vocab_hash != ck.vocab_hash)
    throw Error(dir.string() + ": checkpoint vocabulary hash does not match the dataset vocabulary");

  ck.params = ModelParams<float>::zeros(ck.model);
  std::unordered_map<std::string, const nlohmann::json*> entries;
  for (const auto& e : m.at("params")) entries[e.at("name").get<std::string>()] = &e;
  ck.params.visit([&](const std::string& name, Matrix<float>& a) {
    auto it = entries.find(name);
    if (it == entries.end()) throw Error(dir.string() + ": missing parameter " + name);
    const auto& e = *it->second;
    const auto rows = e.at("shape")[0].get<Eigen::Index>(), cols = e.at("shape")[1].get<Eigen::Index>();
    if (rows != a.rows() || cols != a.cols())
      throw Error(dir.string() + ": parameter " + name + " has shape [" + std::to_string(rows) + "," +
                  std::to_string(cols) + "], model expects [" + std::to_string(a.rows()) + "," +
                  std::to_string(a.cols()) + "]");
    const auto v = io::read_raw<float>(dir / e.at("file").get<std::string>(), static_cast<std::size_t>(a.size()));
    std::copy(v.begin(), v.end(), a.data());
  });
  return ck;
}

}  // namespace carp
