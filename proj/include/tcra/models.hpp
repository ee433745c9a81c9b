#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcra/attention.hpp"
#include "tcra/cells.hpp"
#include "tcra/data_io/dataset.hpp"
#include "tcra/errors.hpp"
#include "tcra/numerics/tape.hpp"

namespace tcra {

enum class Arch { global, naive_fusion, coupled, tricoupled, tricoupled_attention };

inline const char* to_string(Arch a) {
  switch (a) {
    case Arch::global: return "global";
    case Arch::naive_fusion: return "naive_fusion";
    case Arch::coupled: return "coupled";
    case Arch::tricoupled: return "tricoupled";
    case Arch::tricoupled_attention: return "tricoupled_attention";
  }
  return "?";
}

inline Arch arch_from_string(const std::string& s) {
  for (auto a : {Arch::global, Arch::naive_fusion, Arch::coupled, Arch::tricoupled, Arch::tricoupled_attention})
    if (s == to_string(a)) return a;
  throw ConfigError("unknown architecture '" + s + "'");
}

enum class LossMode { last_step, per_step_mean };

inline const char* to_string(LossMode m) { return m == LossMode::last_step ? "last_step" : "per_step_mean"; }

inline LossMode loss_mode_from_string(const std::string& s) {
  if (s == "last_step") return LossMode::last_step;
  if (s == "per_step_mean") return LossMode::per_step_mean;
  throw ConfigError("unknown loss mode '" + s + "'");
}

struct ModelConfig {
  Arch arch = Arch::tricoupled_attention;
  std::size_t hidden = 512;
  std::size_t num_classes = 2;
  StreamDims subject{};
  StreamDims global{};
  double dropout_rate = 0.5;
  LossMode loss_mode = LossMode::last_step;
  Peephole peephole = Peephole::full;

  void validate() const {
    if (hidden == 0) throw ConfigError("hidden must be positive");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
    if (global.channels == 0 || global.side == 0) throw ConfigError("global stream dims must be positive");
    if (arch != Arch::global && (subject.channels == 0 || subject.side == 0)) {
      throw ConfigError("subject stream dims must be positive");
    }
  }

  bool uses_subjects() const { return arch != Arch::global; }
  bool uses_global() const { return arch != Arch::coupled; }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)},       {"hidden", c.hidden},
          {"num_classes", c.num_classes},    {"subject", to_json(c.subject)},
          {"global", to_json(c.global)},     {"dropout_rate", c.dropout_rate},
          {"loss_mode", to_string(c.loss_mode)}, {"peephole", to_string(c.peephole)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.arch = arch_from_string(j.at("arch").get<std::string>());
    c.hidden = j.at("hidden").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.subject = stream_dims_from_json(j.at("subject"));
    c.global = stream_dims_from_json(j.at("global"));
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.loss_mode = loss_mode_from_string(j.at("loss_mode").get<std::string>());
    c.peephole = peephole_from_string(j.value("peephole", std::string("full")));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("model config: ") + ex.what());
  }
  c.validate();
  return c;
}

/// Softmax layer y = softmax(w h + b) over the concatenated stream states.
template <typename Real>
struct ClassifierHead {
  Parameter<Real> w;  // [N, feature_dim]
  Parameter<Real> b;  // [N]

  static ClassifierHead zeros(const std::string& prefix, std::size_t classes, std::size_t features) {
    return {Parameter<Real>(prefix + "w", Tensor<Real>({classes, features})),
            Parameter<Real>(prefix + "b", Tensor<Real>({classes}))};
  }

  Var<Real> logits(Tape<Real>& t, Var<Real> features) const {
    return add(matvec(t.param(w), features), t.param(b));
  }
  Var<Real> probs(Tape<Real>& t, Var<Real> features) const { return softmax(logits(t, features)); }
};

/// Parameters of one architecture. Only the members used by `config.arch`
/// are populated.
template <typename Real>
struct Model {
  ModelConfig config;
  std::optional<LstmParams<Real>> global_lstm;  // global, naive_fusion, tricoupled*
  std::optional<LstmParams<Real>> solo1, solo2;  // naive_fusion subject LSTMs
  std::optional<CoupledParams<Real>> coupled1, coupled2;
  std::optional<AttentionParams<Real>> attention1, attention2;
  std::vector<ClassifierHead<Real>> heads;

  static Model zeros(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.config = cfg;
    const auto H = cfg.hidden, N = cfg.num_classes;
    const auto Kg = cfg.global.channels, Ks = cfg.subject.channels;
    switch (cfg.arch) {
      case Arch::global:
        m.global_lstm = LstmParams<Real>::zeros("global.", Kg, H, cfg.peephole);
        m.heads.push_back(ClassifierHead<Real>::zeros("head.", N, H));
        break;
      case Arch::naive_fusion:
        m.solo1 = LstmParams<Real>::zeros("s1.", Ks, H, cfg.peephole);
        m.solo2 = LstmParams<Real>::zeros("s2.", Ks, H, cfg.peephole);
        m.global_lstm = LstmParams<Real>::zeros("global.", Kg, H, cfg.peephole);
        m.heads.push_back(ClassifierHead<Real>::zeros("head_s1.", N, H));
        m.heads.push_back(ClassifierHead<Real>::zeros("head_s2.", N, H));
        m.heads.push_back(ClassifierHead<Real>::zeros("head_global.", N, H));
        break;
      case Arch::coupled:
        m.coupled1 = CoupledParams<Real>::zeros("s1.", Ks, H, std::nullopt, cfg.peephole);
        m.coupled2 = CoupledParams<Real>::zeros("s2.", Ks, H, std::nullopt, cfg.peephole);
        m.heads.push_back(ClassifierHead<Real>::zeros("head.", N, 2 * H));
        break;
      case Arch::tricoupled:
      case Arch::tricoupled_attention:
        m.global_lstm = LstmParams<Real>::zeros("global.", Kg, H, cfg.peephole);
        m.coupled1 = CoupledParams<Real>::zeros("s1.", Ks, H, H, cfg.peephole);
        m.coupled2 = CoupledParams<Real>::zeros("s2.", Ks, H, H, cfg.peephole);
        m.heads.push_back(ClassifierHead<Real>::zeros("head.", N, 3 * H));
        if (cfg.arch == Arch::tricoupled_attention) {
          const auto L = cfg.subject.locations();
          m.attention1 = AttentionParams<Real>::zeros("s1.att.", L, H, Ks);
          m.attention2 = AttentionParams<Real>::zeros("s2.att.", L, H, Ks);
        }
        break;
    }
    return m;
  }

  std::vector<Parameter<Real>*> parameters() {
    std::vector<Parameter<Real>*> ps;
    auto take = [&](auto& opt) {
      if (opt)
        for (auto* p : opt->parameters()) ps.push_back(p);
    };
    take(global_lstm);
    take(solo1);
    take(solo2);
    take(coupled1);
    take(coupled2);
    take(attention1);
    take(attention2);
    for (auto& h : heads) {
      ps.push_back(&h.w);
      ps.push_back(&h.b);
    }
    return ps;
  }

  std::vector<const Parameter<Real>*> parameters() const {
    auto ps = const_cast<Model*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  /// Copies a trained global-arch LSTM into this model's global stream.
  /// The copied weights are frozen unless `finetune`.
  void load_global_stream(const Model& pretrained, bool finetune) {
    if (pretrained.config.arch != Arch::global) {
      throw ConfigError(std::string("pretrained global stream must come from a 'global' model, got '") +
                        to_string(pretrained.config.arch) + "'");
    }
    if (!global_lstm) throw ConfigError(std::string(to_string(config.arch)) + " has no global stream");
    const auto& src = *pretrained.global_lstm;
    if (src.input_dim != global_lstm->input_dim || src.hidden != global_lstm->hidden ||
        src.peephole != global_lstm->peephole) {
      throw ConfigError("pretrained global LSTM dims do not match");
    }
    auto dst = global_lstm->parameters();
    auto from = const_cast<LstmParams<Real>&>(src).parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i]->value = from[i]->value;
      dst[i]->trainable = finetune;
    }
  }
};

/// Per-step dropout masks with inverted scaling; disabled when `rng` is null.
template <typename Real>
struct DropoutSpec {
  std::mt19937_64* rng = nullptr;
  double rate = 0.0;

  bool active() const { return rng != nullptr && rate > 0.0; }

  Tensor<Real> mask(std::size_t n) const {
    Tensor<Real> m({n});
    std::bernoulli_distribution keep(1.0 - rate);
    const Real s = static_cast<Real>(1.0 / (1.0 - rate));
    for (std::size_t k = 0; k < n; ++k) m[k] = keep(*rng) ? s : Real(0);
    return m;
  }
};

template <typename Real>
struct ForwardOptions {
  bool per_step = false;  // evaluate the head at every step, not just the last
  DropoutSpec<Real> dropout;
  std::optional<std::size_t> label;  // when set, the training loss is recorded
};

template <typename Real>
struct ForwardTrace {
  std::vector<Var<Real>> step_probs;                 // one per evaluated step
  std::vector<std::vector<Var<Real>>> stream_probs;  // naive fusion: per step, per head
  Var<Real> probs;                                   // final-step distribution
  std::optional<Var<Real>> loss;
  std::vector<Var<Real>> attention1, attention2;
};

namespace detail {

template <typename Real>
void check_stream(const char* name, const Tensor<Real>& s, std::size_t T, const StreamDims& d) {
  if (s.empty()) throw ConfigError(std::string("sample lacks the ") + name + " stream required by this architecture");
  if (s.shape() != Shape{T, d.locations(), d.channels}) {
    throw ConfigError(std::string(name) + " stream has shape " + shape_str(s.shape()) + ", model expects " +
                      shape_str({T, d.locations(), d.channels}));
  }
}

}  // namespace detail

/// Runs the architecture over every frame of `window` on `t`.
template <typename Real>
ForwardTrace<Real> forward(Tape<Real>& t, const Model<Real>& m, const InteractionSample<Real>& window,
                           const ForwardOptions<Real>& opts = {}) {
  const auto& cfg = m.config;
  const std::size_t T = window.length();
  if (T == 0) throw DataError("forward: empty window");
  if (cfg.uses_global()) detail::check_stream("global", window.global, T, cfg.global);
  if (cfg.uses_subjects()) {
    detail::check_stream("subject1", window.subject1, T, cfg.subject);
    detail::check_stream("subject2", window.subject2, T, cfg.subject);
  }
  const std::size_t H = cfg.hidden;
  const bool attention = cfg.arch == Arch::tricoupled_attention;

  ForwardTrace<Real> tr;
  auto s1 = StateVars<Real>::zeros(t, H), s2 = StateVars<Real>::zeros(t, H), sg = StateVars<Real>::zeros(t, H);
  std::vector<Var<Real>> losses;

  auto head_input = [&](Var<Real> features) {
    return opts.dropout.active() ? apply_dropout(features, opts.dropout.mask(features.value().size())) : features;
  };
  auto mean_input = [&](const Tensor<Real>& stream, std::size_t step) {
    return t.constant(row_mean(stream.slice(step)));
  };

  for (std::size_t step = 0; step < T; ++step) {
    switch (cfg.arch) {
      case Arch::global:
        sg = lstm_step(t, *m.global_lstm, mean_input(window.global, step), sg);
        break;
      case Arch::naive_fusion:
        s1 = lstm_step(t, *m.solo1, mean_input(window.subject1, step), s1);
        s2 = lstm_step(t, *m.solo2, mean_input(window.subject2, step), s2);
        sg = lstm_step(t, *m.global_lstm, mean_input(window.global, step), sg);
        break;
      case Arch::coupled:
        std::tie(s1, s2) = coupled_step(t, *m.coupled1, *m.coupled2, mean_input(window.subject1, step),
                                        mean_input(window.subject2, step), s1, s2);
        break;
      case Arch::tricoupled:
      case Arch::tricoupled_attention: {
        sg = lstm_step(t, *m.global_lstm, mean_input(window.global, step), sg);
        Var<Real> x1, x2;
        if (attention) {
          auto a1 = attend(t, *m.attention1, t.constant(window.subject1.slice(step)), s1.h,
                           std::optional<Var<Real>>(s2.h));
          auto a2 = attend(t, *m.attention2, t.constant(window.subject2.slice(step)), s2.h,
                           std::optional<Var<Real>>(s1.h));
          tr.attention1.push_back(a1.weights);
          tr.attention2.push_back(a2.weights);
          x1 = a1.input;
          x2 = a2.input;
        } else {
          x1 = mean_input(window.subject1, step);
          x2 = mean_input(window.subject2, step);
        }
        std::tie(s1, s2) = tricoupled_step(t, *m.coupled1, *m.coupled2, x1, x2, s1, s2, sg.h);
        break;
      }
    }

    const bool last = step + 1 == T;
    if (!last && !opts.per_step && !(opts.label && cfg.loss_mode == LossMode::per_step_mean)) continue;

    Var<Real> probs;
    if (cfg.arch == Arch::naive_fusion) {
      std::vector<Var<Real>> heads{m.heads[0].probs(t, head_input(s1.h)), m.heads[1].probs(t, head_input(s2.h)),
                                   m.heads[2].probs(t, head_input(sg.h))};
      probs = mean(heads);
      if (opts.label) {
        // The three streams are independent models; train each on its own NLL.
        losses.push_back(add(add(nll(heads[0], *opts.label), nll(heads[1], *opts.label)), nll(heads[2], *opts.label)));
      }
      tr.stream_probs.push_back(std::move(heads));
    } else {
      Var<Real> features;
      switch (cfg.arch) {
        case Arch::global: features = sg.h; break;
        case Arch::coupled: features = concat<Real>({s1.h, s2.h}); break;
        default: features = concat<Real>({s1.h, s2.h, sg.h}); break;
      }
      probs = m.heads[0].probs(t, head_input(features));
      if (opts.label) losses.push_back(nll(probs, *opts.label));
    }
    tr.step_probs.push_back(probs);
    if (last) tr.probs = probs;
  }

  if (opts.label) {
    if (cfg.loss_mode == LossMode::last_step) tr.loss = losses.back();
    else tr.loss = mean(losses);
  }
  return tr;
}

template <typename Real>
struct Prediction {
  Tensor<Real> probs;
  std::vector<Tensor<Real>> per_step_probs;
  std::vector<Tensor<Real>> attention1, attention2;

  std::size_t predicted() const { return argmax<Real>(probs.values()); }
};

/// Dropout-free inference.
template <typename Real>
Prediction<Real> predict(const Model<Real>& m, const InteractionSample<Real>& window, bool per_step = false) {
  Tape<Real> t;
  ForwardOptions<Real> opts;
  opts.per_step = per_step;
  auto tr = forward(t, m, window, opts);
  Prediction<Real> p;
  p.probs = tr.probs.value();
  if (per_step)
    for (auto v : tr.step_probs) p.per_step_probs.push_back(v.value());
  for (auto v : tr.attention1) p.attention1.push_back(v.value());
  for (auto v : tr.attention2) p.attention2.push_back(v.value());
  return p;
}

/// Fills in subject 2 of a single-actor sample with a copy of subject 1.
template <typename Real>
InteractionSample<Real> duplicate_single_actor(const InteractionSample<Real>& s) {
  if (!s.single_actor) {
    throw DataError("duplicate_single_actor: sample " + s.id + " has two actors");
  }
  InteractionSample<Real> out = s;
  out.subject2 = s.subject1;
  out.region2 = s.region1;
  return out;
}

}  // namespace tcra
