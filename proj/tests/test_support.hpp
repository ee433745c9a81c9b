#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "tcra/tcra.hpp"

namespace tcra::testing {

inline ModelConfig tiny_config(Arch arch, Peephole peephole = Peephole::full) {
  ModelConfig c;
  c.arch = arch;
  c.hidden = 8;
  c.num_classes = 3;
  c.subject = {4, 3};
  c.global = {4, 3};
  c.dropout_rate = 0.0;
  c.peephole = peephole;
  return c;
}

inline constexpr Arch kAllArchs[] = {Arch::global, Arch::naive_fusion, Arch::coupled, Arch::tricoupled,
                                     Arch::tricoupled_attention};

template <typename Real>
Tensor<Real> random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  Tensor<Real> t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = static_cast<Real>(n(rng));
  return t;
}

template <typename Real>
void randomize(Model<Real>& m, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto* p : m.parameters())
    for (auto& v : p->value.values()) v = static_cast<Real>(n(rng));
}

template <typename Real>
InteractionSample<Real> random_sample(std::mt19937_64& rng, std::size_t T, const ModelConfig& c,
                                      std::size_t label = 0, double scale = 1.0) {
  InteractionSample<Real> s;
  s.id = "r" + std::to_string(rng() % 100000);
  s.label = label;
  s.subject1 = random_tensor<Real>(rng, {T, c.subject.locations(), c.subject.channels}, scale);
  s.subject2 = random_tensor<Real>(rng, {T, c.subject.locations(), c.subject.channels}, scale);
  s.global = random_tensor<Real>(rng, {T, c.global.locations(), c.global.channels}, scale);
  return s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("tcra_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace tcra::testing
