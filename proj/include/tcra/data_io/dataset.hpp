#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcra/data_io/tensor_file.hpp"
#include "tcra/errors.hpp"
#include "tcra/numerics/tensor.hpp"

namespace tcra {

struct StreamDims {
  std::size_t channels = 0;  // K
  std::size_t side = 0;      // D

  std::size_t locations() const { return side * side; }
  friend bool operator==(const StreamDims&, const StreamDims&) = default;
};

/// One video: three aligned feature streams of shape [T, D², K] and a label.
/// A single-actor sample may leave `subject2` empty until duplicated.
template <typename Real>
struct InteractionSample {
  std::string id;
  std::size_t label = 0;
  bool single_actor = false;
  Tensor<Real> subject1;
  Tensor<Real> subject2;
  Tensor<Real> global;
  // Ground-truth discriminative location per frame, when known.
  std::vector<std::size_t> region1;
  std::vector<std::size_t> region2;

  std::size_t length() const { return subject1.empty() ? 0 : subject1.dim(0); }
};

struct ManifestEntry {
  std::string id;
  std::size_t label = 0;
  std::size_t T = 0;
  bool single_actor = false;
  std::string subject1_path;
  std::string subject2_path;  // empty for an undubbed single-actor sample
  std::string global_path;
  std::optional<int> fold;
  std::vector<std::size_t> region1, region2;
  std::optional<int> pattern1, pattern2;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  StreamDims subject;
  StreamDims global;
  std::vector<ManifestEntry> samples;

  std::size_t num_classes() const { return class_names.size(); }
};

inline nlohmann::json to_json(const StreamDims& d) { return {{"K", d.channels}, {"D", d.side}}; }

inline StreamDims stream_dims_from_json(const nlohmann::json& j) {
  return {j.at("K").get<std::size_t>(), j.at("D").get<std::size_t>()};
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& e : m.samples) {
    nlohmann::json paths{{"subject1", e.subject1_path}, {"global", e.global_path}};
    paths["subject2"] = e.subject2_path.empty() ? nlohmann::json(nullptr) : nlohmann::json(e.subject2_path);
    nlohmann::json s{{"id", e.id}, {"label", e.label}, {"T", e.T}, {"single_actor", e.single_actor}, {"paths", paths}};
    if (e.fold) s["fold"] = *e.fold;
    if (!e.region1.empty() || !e.region2.empty()) s["region"] = {{"subject1", e.region1}, {"subject2", e.region2}};
    if (e.pattern1 || e.pattern2) s["pattern"] = {{"subject1", e.pattern1.value_or(-1)}, {"subject2", e.pattern2.value_or(-1)}};
    samples.push_back(std::move(s));
  }
  return {{"class_names", m.class_names},
          {"feature_dims", {{"subject1", to_json(m.subject)}, {"subject2", to_json(m.subject)}, {"global", to_json(m.global)}}},
          {"samples", samples}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    const auto& dims = j.at("feature_dims");
    m.subject = stream_dims_from_json(dims.at("subject1"));
    if (dims.contains("subject2") && !(stream_dims_from_json(dims.at("subject2")) == m.subject)) {
      throw DataError("manifest: subject1 and subject2 feature dims differ");
    }
    m.global = stream_dims_from_json(dims.at("global"));
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.label = s.at("label").get<std::size_t>();
      e.T = s.at("T").get<std::size_t>();
      e.single_actor = s.value("single_actor", false);
      const auto& paths = s.at("paths");
      e.subject1_path = paths.at("subject1").get<std::string>();
      if (paths.contains("subject2") && !paths.at("subject2").is_null()) {
        e.subject2_path = paths.at("subject2").get<std::string>();
      }
      e.global_path = paths.at("global").get<std::string>();
      if (s.contains("fold")) e.fold = s.at("fold").get<int>();
      if (s.contains("region")) {
        e.region1 = s.at("region").at("subject1").get<std::vector<std::size_t>>();
        e.region2 = s.at("region").at("subject2").get<std::vector<std::size_t>>();
      }
      if (s.contains("pattern")) {
        e.pattern1 = s.at("pattern").at("subject1").get<int>();
        e.pattern2 = s.at("pattern").at("subject2").get<int>();
      }
      if (e.label >= m.class_names.size()) {
        throw DataError("manifest: sample " + e.id + " has label " + std::to_string(e.label) + " >= " +
                        std::to_string(m.class_names.size()) + " classes");
      }
      if (e.T == 0) throw DataError("manifest: sample " + e.id + " has T = 0");
      if (e.subject2_path.empty() && !e.single_actor) {
        throw DataError("manifest: two-actor sample " + e.id + " lacks a subject2 stream");
      }
      m.samples.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("manifest schema error: ") + ex.what());
  }
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw FileError("cannot open " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& ex) {
    throw FormatError(file.string() + ": " + ex.what(), ex.byte);
  }
  return manifest_from_json(j);
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw FileError("cannot open " + file.string() + " for writing");
  os << to_json(m).dump(2) << '\n';
  if (!os) throw FileError("write failed for " + file.string());
}

template <typename Real>
struct Dataset {
  DatasetManifest manifest;
  std::vector<InteractionSample<Real>> samples;
  std::vector<std::optional<int>> folds;  // parallel to samples
};

template <typename Real>
Tensor<Real> load_stream(const std::filesystem::path& root, const std::string& rel, std::size_t T,
                         const StreamDims& dims, const std::string& id) {
  auto t = read_tensor<Real>(root / rel);
  const Shape want{T, dims.locations(), dims.channels};
  if (t.shape() != want) {
    throw DataError("sample " + id + ": " + rel + " has shape " + shape_str(t.shape()) + ", expected " +
                    shape_str(want));
  }
  return t;
}

/// Loads <root>/manifest.json and every referenced stream.
template <typename Real>
Dataset<Real> load_dataset(const std::filesystem::path& root) {
  Dataset<Real> ds;
  ds.manifest = load_manifest(root / "manifest.json");
  for (const auto& e : ds.manifest.samples) {
    InteractionSample<Real> s;
    s.id = e.id;
    s.label = e.label;
    s.single_actor = e.single_actor;
    s.subject1 = load_stream<Real>(root, e.subject1_path, e.T, ds.manifest.subject, e.id);
    if (!e.subject2_path.empty()) s.subject2 = load_stream<Real>(root, e.subject2_path, e.T, ds.manifest.subject, e.id);
    s.global = load_stream<Real>(root, e.global_path, e.T, ds.manifest.global, e.id);
    s.region1 = e.region1;
    s.region2 = e.region2;
    ds.samples.push_back(std::move(s));
    ds.folds.push_back(e.fold);
  }
  return ds;
}

}  // namespace tcra
