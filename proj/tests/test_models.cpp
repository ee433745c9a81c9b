#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "tcra/tcra.hpp"
#include "test_support.hpp"

using namespace tcra;
using namespace tcra::testing;

class EveryArch : public ::testing::TestWithParam<Arch> {};

INSTANTIATE_TEST_SUITE_P(Models, EveryArch, ::testing::ValuesIn(kAllArchs),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST_P(EveryArch, ZeroParametersPredictUniform) {
  std::mt19937_64 rng(1);
  auto cfg = tiny_config(GetParam());
  auto m = Model<double>::zeros(cfg);
  auto s = random_sample<double>(rng, 5, cfg);
  auto p = predict(m, s, true);
  ASSERT_EQ(p.per_step_probs.size(), 5u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p.probs[k], 1.0 / 3.0, 1e-15);
  if (GetParam() == Arch::tricoupled_attention) {
    ASSERT_EQ(p.attention1.size(), 5u);
    for (auto v : p.attention1[0].values()) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
  } else {
    EXPECT_TRUE(p.attention1.empty());
  }
}

TEST_P(EveryArch, NllGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  auto cfg = tiny_config(GetParam());
  auto m = Model<double>::zeros(cfg);
  randomize(m, rng);
  auto s = random_sample<double>(rng, 3, cfg, 2);
  auto ps = m.parameters();
  auto f = [&](Tape<double>& t) {
    ForwardOptions<double> o;
    o.label = s.label;
    return *forward(t, m, s, o).loss;
  };
  auto r = grad_check<double>(f, ps);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic
                                   << " numeric " << r.worst_numeric;
}

TEST_P(EveryArch, PerStepLossWithDropoutAndDiagonalPeepholes) {
  std::mt19937_64 rng(3);
  auto cfg = tiny_config(GetParam(), Peephole::diagonal);
  cfg.loss_mode = LossMode::per_step_mean;
  auto m = Model<double>::zeros(cfg);
  randomize(m, rng);
  auto s = random_sample<double>(rng, 3, cfg, 1);
  auto ps = m.parameters();
  auto f = [&](Tape<double>& t) {
    std::mt19937_64 mask_rng(99);  // same masks on every evaluation
    ForwardOptions<double> o;
    o.label = s.label;
    o.dropout = {&mask_rng, 0.5};
    return *forward(t, m, s, o).loss;
  };
  auto r = grad_check<double>(f, ps);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << " rel " << r.max_rel_error;
}

TEST_P(EveryArch, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(4);
  auto cfg = tiny_config(GetParam());
  for (int rep = 0; rep < 20; ++rep) {
    auto m = Model<double>::zeros(cfg);
    randomize(m, rng, 1.5);
    auto p = predict(m, random_sample<double>(rng, 4, cfg, 0, 3.0), true);
    for (const auto& q : p.per_step_probs) {
      double total = 0;
      for (auto v : q.values()) total += v;
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Models, ParameterNamesAreUnique) {
  for (auto a : kAllArchs) {
    auto m = Model<double>::zeros(tiny_config(a));
    std::set<std::string> names;
    for (auto* p : m.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  }
}

TEST(Models, NaiveFusionAveragesHeadsAndSumsTheirLosses) {
  std::mt19937_64 rng(5);
  auto cfg = tiny_config(Arch::naive_fusion);
  auto m = Model<double>::zeros(cfg);
  randomize(m, rng);
  auto s = random_sample<double>(rng, 4, cfg, 1);
  Tape<double> t;
  ForwardOptions<double> o;
  o.label = 1;
  auto tr = forward(t, m, s, o);
  const auto& heads = tr.stream_probs.back();
  ASSERT_EQ(heads.size(), 3u);
  double loss = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double avg = (heads[0].value()[k] + heads[1].value()[k] + heads[2].value()[k]) / 3.0;
    EXPECT_NEAR(tr.probs.value()[k], avg, 1e-15);
  }
  for (const auto& h : heads) loss += -std::log(h.value()[1] + 1e-12);
  EXPECT_NEAR(tr.loss->value()[0], loss, 1e-12);
}

TEST(Models, CoupledIgnoresGlobalStreamAndGlobalIgnoresSubjects) {
  std::mt19937_64 rng(6);
  auto cc = tiny_config(Arch::coupled);
  auto mc = Model<double>::zeros(cc);
  randomize(mc, rng);
  auto s = random_sample<double>(rng, 4, cc);
  auto a = predict(mc, s);
  s.global = random_tensor<double>(rng, s.global.shape());
  EXPECT_EQ(predict(mc, s).probs, a.probs);

  auto cg = tiny_config(Arch::global);
  auto mg = Model<double>::zeros(cg);
  randomize(mg, rng);
  auto b = predict(mg, s);
  s.subject1 = random_tensor<double>(rng, s.subject1.shape());
  EXPECT_EQ(predict(mg, s).probs, b.probs);
}

TEST(Models, MissingStreamIsReported) {
  std::mt19937_64 rng(7);
  auto cfg = tiny_config(Arch::coupled);
  auto m = Model<double>::zeros(cfg);
  auto s = random_sample<double>(rng, 4, cfg);
  s.subject2 = Tensor<double>();
  EXPECT_THROW(predict(m, s), ConfigError);
  s.subject2 = random_tensor<double>(rng, {4, 4, 4});
  EXPECT_THROW(predict(m, s), ConfigError);
}

TEST(Models, DuplicateSingleActor) {
  std::mt19937_64 rng(8);
  auto cfg = tiny_config(Arch::coupled);
  auto s = random_sample<double>(rng, 4, cfg);
  EXPECT_THROW(duplicate_single_actor(s), DataError);
  s.single_actor = true;
  s.subject2 = Tensor<double>();
  s.region1 = {1, 2, 3, 4};
  auto d = duplicate_single_actor(s);
  EXPECT_EQ(d.subject2, d.subject1);
  EXPECT_EQ(d.region2, s.region1);
}

TEST(Models, ConfigValidationAndNames) {
  auto c = tiny_config(Arch::global);
  c.hidden = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config(Arch::global);
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(arch_from_string("lstm"), ConfigError);
  for (auto a : kAllArchs) EXPECT_EQ(arch_from_string(to_string(a)), a);
  auto cfg = tiny_config(Arch::tricoupled, Peephole::diagonal);
  auto back = model_config_from_json(to_json(cfg));
  EXPECT_EQ(back.arch, cfg.arch);
  EXPECT_EQ(back.peephole, Peephole::diagonal);
  EXPECT_EQ(back.subject, cfg.subject);
}

TEST(Models, LoadGlobalStreamFreezesByDefault) {
  std::mt19937_64 rng(9);
  auto g = Model<double>::zeros(tiny_config(Arch::global));
  randomize(g, rng);
  auto m = Model<double>::zeros(tiny_config(Arch::tricoupled));
  m.load_global_stream(g, false);
  EXPECT_EQ(m.global_lstm->W_i.value, g.global_lstm->W_i.value);
  for (auto* p : m.global_lstm->parameters()) EXPECT_FALSE(p->trainable);
  m.load_global_stream(g, true);
  for (auto* p : m.global_lstm->parameters()) EXPECT_TRUE(p->trainable);

  EXPECT_THROW(m.load_global_stream(m, false), ConfigError);
  auto coupled = Model<double>::zeros(tiny_config(Arch::coupled));
  EXPECT_THROW(coupled.load_global_stream(g, false), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(10);
  TempDir dir("ckpt");
  for (auto a : kAllArchs) {
    auto m = Model<double>::zeros(tiny_config(a));
    randomize(m, rng);
    if (m.global_lstm) m.global_lstm->W_o.trainable = false;
    const auto path = dir.path() / to_string(a);
    save_checkpoint(m, path);
    auto back = load_checkpoint<double>(path, a);
    auto ps = m.parameters();
    auto qs = back.parameters();
    ASSERT_EQ(ps.size(), qs.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      EXPECT_EQ(ps[i]->name, qs[i]->name);
      EXPECT_EQ(ps[i]->value, qs[i]->value);
      EXPECT_EQ(ps[i]->trainable, qs[i]->trainable);
    }
    auto s = random_sample<double>(rng, 4, m.config);
    EXPECT_EQ(predict(m, s).probs, predict(back, s).probs);
  }
}

TEST(Checkpoint, FailuresAreReported) {
  std::mt19937_64 rng(11);
  TempDir dir("ckpt_bad");
  auto m = Model<double>::zeros(tiny_config(Arch::coupled));
  randomize(m, rng);
  save_checkpoint(m, dir.path());

  EXPECT_THROW(load_checkpoint<double>(dir.path(), Arch::global), ConfigError);

  const auto param = dir.path() / "params" / "s1.W_i.tcra";
  auto bytes = read_file_bytes(param);
  bytes.resize(bytes.size() - 3);
  write_file_bytes(param, bytes);
  try {
    load_checkpoint<double>(dir.path());
    FAIL() << "truncated parameter accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("s1.W_i.tcra"), std::string::npos);
  }

  std::filesystem::remove(param);
  EXPECT_THROW(load_checkpoint<double>(dir.path()), FileError);

  std::ofstream(dir.path() / "model.json") << "{\"format_version\": 1, ";
  EXPECT_THROW(load_checkpoint<double>(dir.path()), FormatError);
  EXPECT_THROW(load_checkpoint<double>(dir.path() / "nowhere"), FileError);
}
