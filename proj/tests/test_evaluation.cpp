#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "tcra/tcra.hpp"
#include "test_support.hpp"

using namespace tcra;
using namespace tcra::testing;

namespace {

// A hand-built global-stream model that reads the label off a one-hot global
// channel: gates saturate open, the forget gate shut, and the head copies h.
Model<double> label_reader(std::size_t classes) {
  ModelConfig c;
  c.arch = Arch::global;
  c.hidden = classes;
  c.num_classes = classes;
  c.global = {classes, 2};
  c.subject = {classes, 2};
  auto m = Model<double>::zeros(c);
  auto& g = *m.global_lstm;
  for (std::size_t k = 0; k < classes; ++k) {
    g.W_c.value.at(k, k) = 10.0;
    m.heads[0].w.value.at(k, k) = 10.0;
  }
  g.b_i.value.fill(10.0);
  g.b_o.value.fill(10.0);
  g.b_f.value.fill(-10.0);
  return m;
}

InteractionSample<double> one_hot_sample(std::size_t label, std::size_t classes, std::size_t T) {
  InteractionSample<double> s;
  s.id = "L" + std::to_string(label) + "_" + std::to_string(T);
  s.label = label;
  Tensor<double> g({T, 4, classes});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < 4; ++i) g[(t * 4 + i) * classes + label] = 1.0;
  s.global = g;
  s.subject1 = g;
  s.subject2 = g;
  return s;
}

}  // namespace

TEST(Truncation, ObservedFrameCounts) {
  EXPECT_EQ(observed_frames(10, 0.3), 3u);
  EXPECT_EQ(observed_frames(10, 0.1), 1u);
  EXPECT_EQ(observed_frames(7, 0.1), 1u);
  EXPECT_EQ(observed_frames(10, 0.05), 1u);
  EXPECT_EQ(observed_frames(20, 0.25), 5u);
  EXPECT_EQ(observed_frames(21, 0.5), 11u);
  EXPECT_EQ(observed_frames(33, 1.0), 33u);
  EXPECT_THROW(observed_frames(10, 0.0), ConfigError);
  EXPECT_THROW(observed_frames(10, 1.5), ConfigError);
  // Every decimal ratio on the default grid times T = 10 is an integer.
  for (int k = 1; k <= 10; ++k) EXPECT_EQ(observed_frames(10, k / 10.0), static_cast<std::size_t>(k));
}

TEST(Truncation, KeepsThePrefix) {
  std::mt19937_64 rng(1);
  auto cfg = tiny_config(Arch::coupled);
  auto s = random_sample<double>(rng, 10, cfg);
  auto p = truncate(s, 0.3);
  ASSERT_EQ(p.length(), 3u);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(p.subject1.slice(t), s.subject1.slice(t));
}

TEST(Windows, StridedStarts) {
  EXPECT_EQ(window_starts(20, 10, 5), (std::vector<std::size_t>{0, 5, 10}));
  EXPECT_EQ(window_starts(7, 10, 5), (std::vector<std::size_t>{0}));
  EXPECT_EQ(window_starts(10, 10, 5), (std::vector<std::size_t>{0}));
  EXPECT_EQ(window_starts(14, 10, 5), (std::vector<std::size_t>{0}));
  EXPECT_EQ(window_starts(15, 10, 5), (std::vector<std::size_t>{0, 5}));
}

TEST(Windows, StartsMatchBruteForce) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t t = 1 + rng() % 60, L = 1 + rng() % 15, stride = 1 + rng() % 8;
    std::vector<std::size_t> want;
    for (std::size_t s = 0; s < t; ++s)
      if (s % stride == 0 && s + L <= t) want.push_back(s);
    if (want.empty()) want.push_back(0);
    EXPECT_EQ(window_starts(t, L, stride), want) << t << " " << L << " " << stride;
  }
}

TEST(Prefix, AveragesWindowDistributions) {
  std::mt19937_64 rng(3);
  auto cfg = tiny_config(Arch::tricoupled_attention);
  auto m = Model<double>::zeros(cfg);
  randomize(m, rng);
  auto s = random_sample<double>(rng, 17, cfg);
  auto p = predict_prefix(m, s, 5, 4);
  Tensor<double> want({3});
  for (std::size_t start : {0, 4, 8, 12}) {
    auto w = predict(m, make_window(s, start, 5)).probs;
    for (std::size_t k = 0; k < 3; ++k) want[k] += w[k] / 4.0;
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p.probs[k], want[k], 1e-14);
}

TEST(Evaluate, PerfectReaderScoresOneAtEveryRatio) {
  std::vector<InteractionSample<double>> data;
  for (std::size_t i = 0; i < 12; ++i) data.push_back(one_hot_sample(i % 3, 3, 8 + i));
  auto rep = evaluate(label_reader(3), data, EvalConfig{});
  ASSERT_EQ(rep.results.size(), 10u);
  for (const auto& r : rep.results) EXPECT_EQ(r.accuracy, 1.0) << r.ratio;
}

TEST(Evaluate, ZeroModelPredictsClassZero) {
  std::mt19937_64 rng(4);
  auto cfg = tiny_config(Arch::coupled);
  auto m = Model<double>::zeros(cfg);
  std::vector<InteractionSample<double>> data;
  for (std::size_t i = 0; i < 9; ++i) data.push_back(random_sample<double>(rng, 6, cfg, i % 3));
  auto rep = evaluate(m, data, EvalConfig{{0.5, 1.0}, 5, 10, 1});
  for (const auto& r : rep.results) {
    EXPECT_DOUBLE_EQ(r.accuracy, 3.0 / 9.0);
    for (auto p : r.predicted) EXPECT_EQ(p, 0u);
  }
}

TEST(Evaluate, ConfusionAgreesWithAccuracyAndOrderDoesNot) {
  std::mt19937_64 rng(5);
  auto cfg = tiny_config(Arch::tricoupled);
  auto m = Model<double>::zeros(cfg);
  randomize(m, rng, 1.0);
  std::vector<InteractionSample<double>> data;
  for (std::size_t i = 0; i < 15; ++i) data.push_back(random_sample<double>(rng, 4 + i, cfg, i % 3));
  EvalConfig ec;
  ec.window = 4;
  ec.stride = 2;
  auto a = evaluate(m, data, ec);
  for (const auto& r : a.results) {
    std::size_t trace = 0, total = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      trace += r.confusion[i][i];
      std::size_t row = 0;
      for (auto v : r.confusion[i]) row += v;
      EXPECT_EQ(row, 5u);
      total += row;
    }
    EXPECT_EQ(total, 15u);
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(trace) / 15.0);
  }

  auto shuffled = data;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  ec.jobs = 3;
  auto b = evaluate(m, shuffled, ec);
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    EXPECT_EQ(a.results[i].accuracy, b.results[i].accuracy);
    EXPECT_EQ(a.results[i].confusion, b.results[i].confusion);
  }
}

TEST(Evaluate, ReportFormats) {
  std::vector<InteractionSample<double>> data{one_hot_sample(1, 2, 5)};
  auto rep = evaluate(label_reader(2), data, EvalConfig{{0.5, 1.0}, 5, 10, 1});
  EXPECT_EQ(rep.to_csv(), "ratio,accuracy\n0.5,1\n1,1\n");
  auto j = nlohmann::json::parse(rep.to_json().dump());
  ASSERT_EQ(j["results"].size(), 2u);
  EXPECT_EQ(j["results"][0]["samples"][0]["id"], "L1_5");
  EXPECT_EQ(j["results"][0]["samples"][0]["predicted"], 1);
}

TEST(Evaluate, RejectsBadConfigAndLabels) {
  std::vector<InteractionSample<double>> data{one_hot_sample(1, 2, 5)};
  EXPECT_THROW(evaluate(label_reader(2), data, EvalConfig{{0.5, 0.2}, 5, 10, 1}), ConfigError);
  EXPECT_THROW(evaluate(label_reader(2), data, EvalConfig{{}, 5, 10, 1}), ConfigError);
  EXPECT_THROW(evaluate(label_reader(2), data, EvalConfig{{1.0}, 0, 10, 1}), ConfigError);
  data[0].label = 2;
  EXPECT_THROW(evaluate(label_reader(2), data, EvalConfig{{1.0}, 5, 10, 1}), DataError);
}

TEST(Folds, EachFoldIsHeldOutOnce) {
  Dataset<double> ds;
  for (std::size_t i = 0; i < 9; ++i) {
    ds.samples.push_back(one_hot_sample(i % 3, 3, 6));
    ds.samples.back().id = "s" + std::to_string(i);
    ds.folds.push_back(static_cast<int>(i % 3));
  }
  std::vector<std::size_t> train_sizes;
  auto out = run_folds<double>(ds, EvalConfig{{1.0}, 5, 10, 1}, [&](const auto& train_set) {
    train_sizes.push_back(train_set.size());
    return label_reader(3);
  });
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t f = 0; f < 3; ++f) {
    EXPECT_EQ(out[f].first, static_cast<int>(f));
    EXPECT_EQ(train_sizes[f], 6u);
    EXPECT_EQ(out[f].second.sample_ids.size(), 3u);
    EXPECT_EQ(out[f].second.results[0].accuracy, 1.0);
  }
  ds.folds.assign(9, std::nullopt);
  EXPECT_THROW(run_folds<double>(ds, EvalConfig{}, [](const auto&) { return label_reader(3); }), DataError);
}
