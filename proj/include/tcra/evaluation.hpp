#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tcra/errors.hpp"
#include "tcra/models.hpp"
#include "tcra/training.hpp"

namespace tcra {

struct EvalConfig {
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::size_t stride = 5;
  std::size_t window = 10;  // L
  std::size_t jobs = 1;

  void validate() const {
    if (ratios.empty()) throw ConfigError("no observation ratios given");
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      if (!(ratios[i] > 0.0 && ratios[i] <= 1.0)) throw ConfigError("observation ratios must lie in (0, 1]");
      if (i > 0 && ratios[i] < ratios[i - 1]) throw ConfigError("observation ratios must be sorted ascending");
    }
    if (stride == 0) throw ConfigError("stride must be positive");
    if (window == 0) throw ConfigError("window length must be positive");
    if (jobs == 0) throw ConfigError("jobs must be positive");
  }
};

/// Number of observed frames ceil(r * T), at least 1. The product is nudged
/// down by a relative 1e-9 so e.g. 0.3 * 10 counts as 3, not 4.
inline std::size_t observed_frames(std::size_t T, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw ConfigError("observation ratio " + std::to_string(r) + " outside (0, 1]");
  const double x = r * static_cast<double>(T);
  const auto t = static_cast<std::size_t>(std::ceil(x - 1e-9 * x));
  return std::clamp<std::size_t>(t, 1, T);
}

template <typename Real>
InteractionSample<Real> truncate(const InteractionSample<Real>& s, double r) {
  const std::size_t t = observed_frames(s.length(), r);
  return make_window(s, 0, t);
}

/// 0-based window starts 0, stride, 2*stride, ... with start + L <= t; a
/// single padded window at 0 when no full window fits.
inline std::vector<std::size_t> window_starts(std::size_t t, std::size_t L, std::size_t stride) {
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + L <= t; s += stride) starts.push_back(s);
  if (starts.empty()) starts.push_back(0);
  return starts;
}

/// Mean of the window probability vectors over the stride-spaced windows.
template <typename Real>
Prediction<Real> predict_prefix(const Model<Real>& m, const InteractionSample<Real>& prefix, std::size_t L,
                                std::size_t stride) {
  if (prefix.length() == 0) throw DataError("predict_prefix: empty prefix");
  const auto starts = window_starts(prefix.length(), L, stride);
  Prediction<Real> out;
  // Running mean, so equal window outputs reproduce exactly.
  std::size_t n = 0;
  for (auto s : starts) {
    auto p = predict(m, make_window(prefix, s, L));
    if (n++ == 0) {
      out.probs = p.probs;
      continue;
    }
    for (std::size_t k = 0; k < out.probs.size(); ++k)
      out.probs[k] += (p.probs[k] - out.probs[k]) / static_cast<Real>(n);
  }
  return out;
}

struct RatioResult {
  double ratio = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::size_t> predicted;               // per sample, input order
  std::vector<std::vector<double>> probs;
};

struct EvalReport {
  std::vector<std::string> sample_ids;
  std::vector<std::size_t> labels;
  std::vector<RatioResult> results;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "ratio,accuracy\n";
    for (const auto& r : results) os << r.ratio << ',' << r.accuracy << '\n';
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : results) {
      nlohmann::json samples = nlohmann::json::array();
      for (std::size_t i = 0; i < r.predicted.size(); ++i) {
        samples.push_back({{"id", sample_ids[i]}, {"label", labels[i]}, {"predicted", r.predicted[i]}, {"probs", r.probs[i]}});
      }
      rs.push_back({{"ratio", r.ratio},
                    {"accuracy", r.accuracy},
                    {"correct", r.correct},
                    {"total", r.total},
                    {"confusion", r.confusion},
                    {"samples", samples}});
    }
    return {{"results", rs}};
  }
};

template <typename Real>
EvalReport evaluate(const Model<Real>& m, const std::vector<InteractionSample<Real>>& samples, const EvalConfig& cfg) {
  cfg.validate();
  const std::size_t N = m.config.num_classes;
  EvalReport report;
  for (const auto& s : samples) {
    if (s.label >= N) throw DataError("evaluate: sample " + s.id + " label out of range");
    report.sample_ids.push_back(s.id);
    report.labels.push_back(s.label);
  }
  for (double r : cfg.ratios) {
    RatioResult res;
    res.ratio = r;
    res.total = samples.size();
    res.confusion.assign(N, std::vector<std::size_t>(N, 0));
    res.predicted.resize(samples.size());
    res.probs.resize(samples.size());

    auto work = [&](std::size_t i) {
      auto p = predict_prefix(m, truncate(samples[i], r), cfg.window, cfg.stride);
      res.predicted[i] = p.predicted();
      res.probs[i].assign(p.probs.values().begin(), p.probs.values().end());
    };
    // Workers fill disjoint slots; aggregation below is order-independent.
    if (cfg.jobs <= 1) {
      for (std::size_t i = 0; i < samples.size(); ++i) work(i);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(cfg.jobs);
      for (std::size_t j = 0; j < cfg.jobs; ++j) {
        pool.emplace_back([&, j] {
          try {
            for (std::size_t i = j; i < samples.size(); i += cfg.jobs) work(i);
          } catch (...) {
            errors[j] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
      ++res.confusion[samples[i].label][res.predicted[i]];
      if (res.predicted[i] == samples[i].label) ++res.correct;
    }
    res.accuracy = res.total ? static_cast<double>(res.correct) / static_cast<double>(res.total) : 0.0;
    report.results.push_back(std::move(res));
  }
  return report;
}

/// Generic split runner: for every fold id present, trains on the other
/// folds and evaluates on it.
template <typename Real>
std::vector<std::pair<int, EvalReport>> run_folds(
    const Dataset<Real>& ds, const EvalConfig& cfg,
    const std::function<Model<Real>(const std::vector<InteractionSample<Real>>&)>& train_fn) {
  std::vector<int> ids;
  for (const auto& f : ds.folds)
    if (f && std::find(ids.begin(), ids.end(), *f) == ids.end()) ids.push_back(*f);
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("run_folds: manifest has no fold assignments");
  std::vector<std::pair<int, EvalReport>> out;
  for (int fold : ids) {
    std::vector<InteractionSample<Real>> train_set, test_set;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      (ds.folds[i] == fold ? test_set : train_set).push_back(ds.samples[i]);
    }
    auto model = train_fn(train_set);
    out.emplace_back(fold, evaluate(model, test_set, cfg));
  }
  return out;
}

}  // namespace tcra
