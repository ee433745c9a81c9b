#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "tcra/data_io/tensor_file.hpp"
#include "tcra/errors.hpp"
#include "tcra/models.hpp"

namespace tcra {

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes <dir>/model.json plus <dir>/params/<name>.tcra per parameter.
template <typename Real>
void save_checkpoint(const Model<Real>& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "params", ec);
  if (ec) throw FileError("cannot create " + (dir / "params").string() + ": " + ec.message());
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto* p : model.parameters()) {
    const std::string file = "params/" + p->name + ".tcra";
    write_tensor(p->value, dir / file);
    manifest.push_back({{"name", p->name}, {"file", file}, {"shape", p->value.shape()}, {"trainable", p->trainable}});
  }
  nlohmann::json doc{{"format_version", kCheckpointFormatVersion},
                     {"config", to_json(model.config)},
                     {"parameters", manifest}};
  std::ofstream os(dir / "model.json");
  if (!os) throw FileError("cannot write " + (dir / "model.json").string());
  os << doc.dump(2) << '\n';
  if (!os) throw FileError("write failed for " + (dir / "model.json").string());
}

/// Loads a checkpoint as a whole; any failure throws and nothing partial is
/// returned. `expected` rejects checkpoints of another architecture.
template <typename Real>
Model<Real> load_checkpoint(const std::filesystem::path& dir, std::optional<Arch> expected = std::nullopt) {
  const auto json_path = dir / "model.json";
  std::ifstream is(json_path);
  if (!is) throw FileError("cannot open " + json_path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& ex) {
    throw FormatError(json_path.string() + ": " + ex.what(), ex.byte);
  }
  if (doc.value("format_version", 0) != kCheckpointFormatVersion) {
    throw FormatError(json_path.string() + ": unsupported checkpoint format version", 0);
  }
  if (!doc.contains("config") || !doc.contains("parameters")) {
    throw FormatError(json_path.string() + ": missing config or parameter manifest", 0);
  }
  const auto cfg = model_config_from_json(doc.at("config"));
  if (expected && cfg.arch != *expected) {
    throw ConfigError("checkpoint " + dir.string() + " holds a '" + to_string(cfg.arch) + "' model, expected '" +
                      to_string(*expected) + "'");
  }

  std::map<std::string, nlohmann::json> entries;
  for (const auto& e : doc.at("parameters")) entries[e.at("name").get<std::string>()] = e;

  auto model = Model<Real>::zeros(cfg);
  for (auto* p : model.parameters()) {
    auto it = entries.find(p->name);
    if (it == entries.end()) throw FormatError(json_path.string() + ": parameter " + p->name + " missing", 0);
    auto value = read_tensor<Real>(dir / it->second.at("file").template get<std::string>());
    if (value.shape() != p->value.shape()) {
      throw FormatError("parameter " + p->name + " has shape " + shape_str(value.shape()) + ", expected " +
                            shape_str(p->value.shape()),
                        8);
    }
    p->value = std::move(value);
    p->grad = Tensor<Real>(p->value.shape());
    p->trainable = it->second.value("trainable", true);
  }
  return model;
}

}  // namespace tcra
