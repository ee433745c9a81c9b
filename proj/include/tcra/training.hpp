#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tcra/errors.hpp"
#include "tcra/models.hpp"

namespace tcra {

struct TrainConfig {
  double lr0 = 0.001;
  std::size_t decay_every = 10;
  double decay_factor = 0.1;
  std::size_t epochs = 30;
  std::size_t window = 10;  // L
  double dropout_rate = 0.5;
  double momentum = 0.0;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const {
    if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
    if (decay_every == 0) throw ConfigError("decay_every must be positive");
    if (!(decay_factor > 0)) throw ConfigError("decay_factor must be positive");
    if (window == 0) throw ConfigError("window length must be positive");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ConfigError("dropout_rate must lie in [0, 1)");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (jobs == 0) throw ConfigError("jobs must be positive");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},           {"decay_every", c.decay_every}, {"decay_factor", c.decay_factor},
          {"epochs", c.epochs},     {"window", c.window},           {"dropout_rate", c.dropout_rate},
          {"momentum", c.momentum}, {"batch_size", c.batch_size},   {"seed", c.seed}};
}

/// lr0 * decay_factor^floor(epoch / decay_every), by repeated multiplication
/// so decimal schedules land on the nearest doubles (0.001 -> 0.0001 -> 1e-5).
inline double learning_rate(const TrainConfig& c, std::size_t epoch) {
  double lr = c.lr0;
  for (std::size_t k = epoch / c.decay_every; k > 0; --k) lr *= c.decay_factor;
  return lr;
}

/// Frames [start, start + L) of every stream; indices past the end repeat
/// the final frame.
template <typename Real>
InteractionSample<Real> make_window(const InteractionSample<Real>& s, std::size_t start, std::size_t L) {
  const std::size_t T = s.length();
  if (T == 0) throw DataError("sample " + s.id + " is empty");
  if (start >= T) throw DataError("window start past the end of sample " + s.id);
  auto cut = [&](const Tensor<Real>& stream) {
    if (stream.empty()) return Tensor<Real>();
    Shape shape = stream.shape();
    const std::size_t frame = stream.size() / T;
    shape[0] = L;
    std::vector<Real> out(L * frame);
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t src = std::min(start + i, T - 1);
      std::copy_n(stream.data() + src * frame, frame, out.data() + i * frame);
    }
    return Tensor<Real>(std::move(shape), std::move(out));
  };
  auto cut_regions = [&](const std::vector<std::size_t>& r) {
    std::vector<std::size_t> out;
    if (r.size() != T) return out;
    for (std::size_t i = 0; i < L; ++i) out.push_back(r[std::min(start + i, T - 1)]);
    return out;
  };
  InteractionSample<Real> w;
  w.id = s.id;
  w.label = s.label;
  w.single_actor = s.single_actor;
  w.subject1 = cut(s.subject1);
  w.subject2 = cut(s.subject2);
  w.global = cut(s.global);
  w.region1 = cut_regions(s.region1);
  w.region2 = cut_regions(s.region2);
  return w;
}

struct WindowDraw {
  std::size_t start = 0;  // 0-based
};

/// Uniform start over the T - L + 1 valid positions; start 0 with padding
/// when T < L.
template <typename Real>
InteractionSample<Real> sample_window(const InteractionSample<Real>& s, std::size_t L, std::mt19937_64& rng,
                                      WindowDraw* draw = nullptr) {
  const std::size_t T = s.length();
  if (T == 0) throw DataError("sample " + s.id + " is empty");
  std::size_t start = 0;
  if (T > L) start = std::uniform_int_distribution<std::size_t>(0, T - L)(rng);
  if (draw) draw->start = start;
  return make_window(s, start, L);
}

/// -log(probs[label] + 1e-12) on plain values.
template <typename Real>
Real nll_loss(const Tensor<Real>& probs, std::size_t label) {
  if (label >= probs.size()) {
    throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(probs.size()) +
                    " classes");
  }
  return -std::log(probs[label] + Real(1e-12));
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0;
  double accuracy = 0;
  double lr = 0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainLog {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<EpochLog> epochs;

  friend bool operator==(const TrainLog&, const TrainLog&) = default;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,loss,acc,lr\n";
    for (const auto& e : epochs) os << e.epoch << ',' << e.loss << ',' << e.accuracy << ',' << e.lr << '\n';
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : epochs) rows.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"acc", e.accuracy}, {"lr", e.lr}});
    return {{"seed", seed}, {"config_hash", config_hash}, {"epochs", rows}};
  }
};

/// FNV-1a over the canonical JSON of the model and training configs.
inline std::string config_hash(const ModelConfig& m, const TrainConfig& t) {
  const std::string text = nlohmann::json{{"model", to_json(m)}, {"train", to_json(t)}}.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

/// Weight matrices ~ U(±sqrt(6 / (fan_in + fan_out))); vectors are treated
/// as [1 x n]. Biases start at zero except forget-gate biases at 1.
template <typename Real>
void initialize_parameters(Model<Real>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto* p : m.parameters()) {
    const std::string leaf = p->name.substr(p->name.rfind('.') + 1);
    const bool bias = leaf == "b" || leaf.rfind("b_", 0) == 0;
    if (bias) {
      p->value.fill(leaf == "b_f" ? Real(1) : Real(0));
      continue;
    }
    const auto& s = p->value.shape();
    const double fan_out = s.size() == 2 ? static_cast<double>(s[0]) : 1.0;
    const double fan_in = static_cast<double>(s.back());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : p->value.values()) v = static_cast<Real>(u(rng));
  }
}

namespace detail {

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index), 0x7c3au};
  return std::mt19937_64(seq);
}

template <typename Real>
struct SampleGrad {
  double loss = 0;
  bool correct = false;
  std::vector<Tensor<Real>> grads;
};

}  // namespace detail

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
};

/// Plain (optionally momentum) SGD over one random window per sample per
/// epoch, gradients averaged over each mini-batch. Frozen parameters
/// (trainable == false) are never updated.
template <typename Real>
TrainLog train(Model<Real>& model, const std::vector<InteractionSample<Real>>& data, const TrainConfig& cfg,
               const TrainHooks& hooks = {}) {
  cfg.validate();
  if (data.empty()) throw DataError("train: empty dataset");
  for (const auto& s : data) {
    if (s.label >= model.config.num_classes) {
      throw DataError("train: sample " + s.id + " label " + std::to_string(s.label) + " >= " +
                      std::to_string(model.config.num_classes));
    }
  }

  auto params = model.parameters();
  std::vector<Tensor<Real>> velocity;
  for (auto* p : params) velocity.emplace_back(p->value.shape());

  TrainLog log;
  log.seed = cfg.seed;
  log.config_hash = config_hash(model.config, cfg);

  auto run_sample = [&](std::size_t epoch, std::size_t pos, std::size_t idx) {
    auto rng = detail::stream_rng(cfg.seed, epoch, pos);
    const auto& s = data[idx];
    auto window = sample_window(s, cfg.window, rng);
    Tape<Real> tape;
    ForwardOptions<Real> opts;
    opts.label = s.label;
    opts.dropout = {&rng, cfg.dropout_rate};
    auto tr = forward(tape, model, window, opts);
    detail::SampleGrad<Real> out;
    out.loss = static_cast<double>(tr.loss->value()[0]);
    out.correct = argmax<Real>(tr.probs.value().values()) == s.label;
    if (!std::isfinite(out.loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << epoch << ", sample " << s.id << ", lr " << learning_rate(cfg, epoch);
      throw NumericalError(msg.str());
    }
    tape.backward(*tr.loss);
    out.grads.reserve(params.size());
    for (auto* p : params) out.grads.push_back(tape.param_grad(*p));
    return out;
  };

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = detail::stream_rng(cfg.seed, epoch, 0xFFFFFFFFu);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      for (auto* p : params) p->zero_grad();

      // Samples are computed in chunks of `jobs` on separate tapes and then
      // reduced strictly in batch order, so results do not depend on jobs.
      for (std::size_t c0 = b0; c0 < b1; c0 += cfg.jobs) {
        const std::size_t c1 = std::min(b1, c0 + cfg.jobs);
        std::vector<detail::SampleGrad<Real>> results(c1 - c0);
        std::vector<std::exception_ptr> errors(c1 - c0);
        auto work = [&](std::size_t k) {
          try {
            results[k] = run_sample(epoch, c0 + k, order[c0 + k]);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        };
        if (c1 - c0 == 1) {
          work(0);
        } else {
          std::vector<std::thread> pool;
          for (std::size_t k = 0; k < c1 - c0; ++k) pool.emplace_back(work, k);
          for (auto& th : pool) th.join();
        }
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
        for (auto& r : results) {
          loss_sum += r.loss;
          correct += r.correct ? 1 : 0;
          for (std::size_t i = 0; i < params.size(); ++i) {
            auto& g = params[i]->grad;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += r.grads[i][k];
          }
        }
      }

      const Real inv = Real(1) / static_cast<Real>(b1 - b0);
      const Real step = static_cast<Real>(lr);
      const Real mu = static_cast<Real>(cfg.momentum);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto* p = params[i];
        if (!p->trainable) continue;
        auto& v = velocity[i];
        for (std::size_t k = 0; k < p->value.size(); ++k) {
          v[k] = mu * v[k] + p->grad[k] * inv;
          p->value[k] -= step * v[k];
        }
      }
    }

    EpochLog e{epoch, loss_sum / static_cast<double>(data.size()),
               static_cast<double>(correct) / static_cast<double>(data.size()), lr};
    log.epochs.push_back(e);
    if (hooks.on_epoch) hooks.on_epoch(e);
  }
  for (auto* p : params) p->zero_grad();
  return log;
}

}  // namespace tcra
