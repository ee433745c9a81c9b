#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcra/data_io/dataset.hpp"
#include "tcra/errors.hpp"

namespace tcra {

/// Parameters of the synthetic two-subject interaction generator.
///
/// Every subject stream is Gaussian noise plus a pattern vector injected at
/// one grid location that random-walks over the map. The pattern amplitude
/// ramps up over the sequence so short prefixes carry less evidence.
///
/// Non-relational: both subjects show the label's pattern.
/// Relational: subject 1 shows pattern a, subject 2 pattern b, and the label
/// is (b - a) mod N, with a cycling over all N values inside each class, so
/// either subject alone carries no information about the label.
struct SyntheticSpec {
  std::size_t num_classes = 4;
  std::size_t samples_per_class = 50;
  std::size_t T_min = 20;
  std::size_t T_max = 40;
  std::size_t K = 8;
  std::size_t D = 4;
  double noise_sigma = 0.5;
  bool relational = false;
  std::uint64_t seed = 1;
  double signal_amplitude = 1.0;
  double early_amplitude = 0.25;  // fraction of full amplitude at frame 0
  double global_weight = 0.5;
  std::size_t move_every = 10;  // frames between random-walk moves; 0 = static
  std::size_t num_folds = 0;

  void validate() const {
    if (num_classes < 2) throw ConfigError("synthetic: num_classes must be >= 2");
    if (samples_per_class == 0) throw ConfigError("synthetic: samples_per_class must be positive");
    if (T_min == 0 || T_max < T_min) throw ConfigError("synthetic: need 1 <= T_min <= T_max");
    if (K < 2 || D == 0) throw ConfigError("synthetic: need K >= 2 and D >= 1");
    if (num_classes > 2 * (K - 1)) throw ConfigError("synthetic: K too small for the number of patterns");
    if (noise_sigma < 0) throw ConfigError("synthetic: noise_sigma must be >= 0");
    if (relational && samples_per_class % num_classes != 0) {
      throw ConfigError("synthetic: relational mode needs samples_per_class divisible by num_classes");
    }
  }
};

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{
      "num_classes", "samples_per_class", "T_min", "T_max", "K", "D", "noise_sigma", "relational", "seed",
      "signal_amplitude", "early_amplitude", "global_weight", "move_every", "num_folds"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("synthetic spec: unknown key '" + key + "'");
    }
  }
  SyntheticSpec s;
  try {
    s.num_classes = j.value("num_classes", s.num_classes);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.T_min = j.value("T_min", s.T_min);
    s.T_max = j.value("T_max", s.T_max);
    s.K = j.value("K", s.K);
    s.D = j.value("D", s.D);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.relational = j.value("relational", s.relational);
    s.seed = j.value("seed", s.seed);
    s.signal_amplitude = j.value("signal_amplitude", s.signal_amplitude);
    s.early_amplitude = j.value("early_amplitude", s.early_amplitude);
    s.global_weight = j.value("global_weight", s.global_weight);
    s.move_every = j.value("move_every", s.move_every);
    s.num_folds = j.value("num_folds", s.num_folds);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("synthetic spec: ") + ex.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"num_classes", s.num_classes}, {"samples_per_class", s.samples_per_class},
          {"T_min", s.T_min}, {"T_max", s.T_max}, {"K", s.K}, {"D", s.D},
          {"noise_sigma", s.noise_sigma}, {"relational", s.relational}, {"seed", s.seed},
          {"signal_amplitude", s.signal_amplitude}, {"early_amplitude", s.early_amplitude},
          {"global_weight", s.global_weight}, {"move_every", s.move_every}, {"num_folds", s.num_folds}};
}

/// Direction of pattern `p`: a salience channel shared by all patterns plus
/// one signed pattern-specific channel.
inline std::vector<double> pattern_vector(std::size_t p, std::size_t K) {
  std::vector<double> v(K, 0.0);
  v[0] = 1.0;
  v[1 + p % (K - 1)] = (p / (K - 1)) % 2 == 0 ? 1.0 : -1.0;
  return v;
}

namespace detail {

inline std::vector<std::size_t> random_walk(std::mt19937_64& rng, std::size_t T, std::size_t D,
                                            std::size_t move_every) {
  std::uniform_int_distribution<std::size_t> start(0, D * D - 1);
  std::uniform_int_distribution<int> dir(0, 3);
  std::size_t loc = start(rng);
  std::vector<std::size_t> path(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (move_every > 0 && t > 0 && t % move_every == 0) {
      std::size_t r = loc / D, c = loc % D;
      switch (dir(rng)) {
        case 0: r = r > 0 ? r - 1 : r; break;
        case 1: r = r + 1 < D ? r + 1 : r; break;
        case 2: c = c > 0 ? c - 1 : c; break;
        default: c = c + 1 < D ? c + 1 : c; break;
      }
      loc = r * D + c;
    }
    path[t] = loc;
  }
  return path;
}

}  // namespace detail

/// Builds the dataset in memory. Values are rounded through f32, the
/// on-disk precision, so the in-memory copy equals what load_dataset reads.
template <typename Real>
Dataset<Real> make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(spec.T_min, spec.T_max);
  const std::size_t N = spec.num_classes, K = spec.K, D = spec.D, locs = D * D;

  Dataset<Real> ds;
  for (std::size_t c = 0; c < N; ++c) ds.manifest.class_names.push_back("class" + std::to_string(c));
  ds.manifest.subject = {K, D};
  ds.manifest.global = {K, D};

  std::size_t serial = 0;
  for (std::size_t label = 0; label < N; ++label) {
    for (std::size_t j = 0; j < spec.samples_per_class; ++j, ++serial) {
      const std::size_t T = length(rng);
      std::size_t pa = label, pb = label;
      if (spec.relational) {
        pa = j % N;
        pb = (label + pa) % N;
      }
      auto path1 = detail::random_walk(rng, T, D, spec.move_every);
      auto path2 = detail::random_walk(rng, T, D, spec.move_every);
      const auto va = pattern_vector(pa, K), vb = pattern_vector(pb, K);

      std::vector<double> s1(T * locs * K), s2(T * locs * K), g(T * locs * K);
      auto fill_stream = [&](std::vector<double>& s, const std::vector<std::size_t>& path, const std::vector<double>& v) {
        for (std::size_t t = 0; t < T; ++t) {
          const double progress = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 1.0;
          const double amp = spec.signal_amplitude * (spec.early_amplitude + (1.0 - spec.early_amplitude) * progress);
          for (std::size_t i = 0; i < locs; ++i)
            for (std::size_t k = 0; k < K; ++k) {
              double x = spec.noise_sigma * noise(rng);
              if (i == path[t]) x += amp * v[k];
              s[(t * locs + i) * K + k] = x;
            }
        }
      };
      fill_stream(s1, path1, va);
      fill_stream(s2, path2, vb);
      for (std::size_t n = 0; n < g.size(); ++n) {
        g[n] = spec.global_weight * (s1[n] + s2[n]) + spec.noise_sigma * noise(rng);
      }

      auto to_tensor = [&](const std::vector<double>& v) {
        std::vector<Real> out(v.size());
        for (std::size_t n = 0; n < v.size(); ++n) out[n] = static_cast<Real>(static_cast<float>(v[n]));
        return Tensor<Real>({T, locs, K}, std::move(out));
      };

      char idbuf[32];
      std::snprintf(idbuf, sizeof idbuf, "s%05zu", serial);
      const std::string id = idbuf;
      InteractionSample<Real> s;
      s.id = id;
      s.label = label;
      s.subject1 = to_tensor(s1);
      s.subject2 = to_tensor(s2);
      s.global = to_tensor(g);
      s.region1 = path1;
      s.region2 = path2;

      ManifestEntry e;
      e.id = id;
      e.label = label;
      e.T = T;
      e.subject1_path = "features/" + id + "_subject1.tcra";
      e.subject2_path = "features/" + id + "_subject2.tcra";
      e.global_path = "features/" + id + "_global.tcra";
      if (spec.num_folds > 0) e.fold = static_cast<int>(j % spec.num_folds);
      e.region1 = path1;
      e.region2 = path2;
      e.pattern1 = static_cast<int>(pa);
      e.pattern2 = static_cast<int>(pb);

      ds.folds.push_back(e.fold);
      ds.manifest.samples.push_back(std::move(e));
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

/// Writes <out>/manifest.json and <out>/features/<id>_<stream>.tcra (f32).
inline DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out) {
  auto ds = make_synthetic<float>(spec);
  std::error_code ec;
  std::filesystem::create_directories(out / "features", ec);
  if (ec) throw FileError("cannot create " + (out / "features").string() + ": " + ec.message());
  for (std::size_t n = 0; n < ds.samples.size(); ++n) {
    const auto& s = ds.samples[n];
    const auto& e = ds.manifest.samples[n];
    write_tensor(s.subject1, out / e.subject1_path);
    write_tensor(s.subject2, out / e.subject2_path);
    write_tensor(s.global, out / e.global_path);
  }
  save_manifest(ds.manifest, out / "manifest.json");
  return ds.manifest;
}

}  // namespace tcra
