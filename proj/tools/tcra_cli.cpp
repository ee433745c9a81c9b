// Command-line front end: synthetic data generation, training, evaluation,
// single-sample prediction, attention dumps and gradient checks.
//
// Exit codes: 0 success, 1 usage/config error, 2 data/format error,
// 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcra/tcra.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tcra;

namespace {

enum class Verbosity { quiet, info, debug };

Verbosity verbosity_from_env() {
  const char* v = std::getenv("TCRA_LOG");
  if (!v || !*v) return Verbosity::info;
  const std::string s = v;
  if (s == "quiet") return Verbosity::quiet;
  if (s == "info") return Verbosity::info;
  if (s == "debug") return Verbosity::debug;
  throw ConfigError("TCRA_LOG must be quiet, info or debug, got '" + s + "'");
}

Verbosity g_verbosity = Verbosity::info;

void log_info(const std::string& msg) {
  if (g_verbosity != Verbosity::quiet) std::cerr << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (g_verbosity == Verbosity::debug) std::cerr << msg << '\n';
}

void print_config(const std::string& command, const json& cfg) {
  std::cerr << "config " << command << ": " << cfg.dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw FileError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw FileError("write failed for " + path.string());
}

/// Loads a dataset, optionally restricted to (or excluding) one fold, and
/// fills in subject 2 of single-actor samples.
std::vector<InteractionSample<double>> load_samples(const fs::path& root, std::optional<int> only_fold,
                                                    std::optional<int> skip_fold, DatasetManifest* manifest) {
  auto ds = load_dataset<double>(root);
  if (manifest) *manifest = ds.manifest;
  std::vector<InteractionSample<double>> out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& f = ds.folds[i];
    if ((only_fold || skip_fold) && !f) {
      throw DataError("sample " + ds.samples[i].id + " has no fold but a fold was requested");
    }
    if (only_fold && *f != *only_fold) continue;
    if (skip_fold && *f == *skip_fold) continue;
    auto& s = ds.samples[i];
    out.push_back(s.single_actor && s.subject2.empty() ? duplicate_single_actor(s) : std::move(s));
  }
  if (out.empty()) throw DataError("no samples selected from " + root.string());
  return out;
}

const InteractionSample<double>& find_sample(const std::vector<InteractionSample<double>>& samples,
                                             const std::string& id) {
  for (const auto& s : samples)
    if (s.id == id) return s;
  throw DataError("--sample: no sample with id '" + id + "'");
}

struct TrainArgs {
  std::string data, out, arch = "tricoupled_attention", loss_mode = "last_step", peephole = "full";
  std::string pretrained_global;
  bool finetune_global = false;
  std::size_t hidden = 512, seq_len = 10, epochs = 30, decay_every = 10, batch_size = 1, jobs = 1;
  double lr = 0.001, decay_factor = 0.1, dropout = 0.5, momentum = 0.0;
  std::uint64_t seed = 0;
  std::optional<int> holdout_fold;
};

int cmd_gen_synthetic(const std::string& spec_path, const std::string& out, std::optional<std::uint64_t> seed) {
  std::ifstream is(spec_path);
  if (!is) throw FileError("--spec: cannot open " + spec_path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError("--spec " + spec_path + ": " + e.what(), e.byte);
  }
  auto spec = synthetic_spec_from_json(j);
  if (seed) spec.seed = *seed;
  print_config("gen-synthetic", {{"spec", to_json(spec)}, {"out", out}});
  auto manifest = generate_synthetic(spec, out);
  write_text(fs::path(out) / "spec.json", to_json(spec).dump(2) + "\n");
  log_info("wrote " + std::to_string(manifest.samples.size()) + " samples to " + out);
  return 0;
}

int cmd_train(const TrainArgs& a) {
  DatasetManifest manifest;
  auto samples = load_samples(a.data, std::nullopt, a.holdout_fold, &manifest);

  ModelConfig mc;
  mc.arch = arch_from_string(a.arch);
  mc.hidden = a.hidden;
  mc.num_classes = manifest.num_classes();
  mc.subject = manifest.subject;
  mc.global = manifest.global;
  mc.dropout_rate = a.dropout;
  mc.loss_mode = loss_mode_from_string(a.loss_mode);
  mc.peephole = peephole_from_string(a.peephole);
  mc.validate();

  TrainConfig tc;
  tc.lr0 = a.lr;
  tc.decay_every = a.decay_every;
  tc.decay_factor = a.decay_factor;
  tc.epochs = a.epochs;
  tc.window = a.seq_len;
  tc.dropout_rate = a.dropout;
  tc.momentum = a.momentum;
  tc.batch_size = a.batch_size;
  tc.seed = a.seed;
  tc.jobs = a.jobs;
  tc.validate();

  if (a.finetune_global && a.pretrained_global.empty()) {
    throw ConfigError("--finetune-global needs --pretrained-global");
  }
  auto model = Model<double>::zeros(mc);
  initialize_parameters(model, a.seed);
  if (!a.pretrained_global.empty()) {
    auto g = load_checkpoint<double>(a.pretrained_global, Arch::global);
    model.load_global_stream(g, a.finetune_global);
  } else if (mc.arch == Arch::tricoupled || mc.arch == Arch::tricoupled_attention) {
    log_info("note: no --pretrained-global given; the global stream is trained jointly");
  }

  json resolved{{"model", to_json(mc)},
                {"train", to_json(tc)},
                {"data", a.data},
                {"samples", samples.size()},
                {"holdout_fold", a.holdout_fold ? json(*a.holdout_fold) : json(nullptr)},
                {"pretrained_global", a.pretrained_global.empty() ? json(nullptr) : json(a.pretrained_global)},
                {"finetune_global", a.finetune_global},
                {"jobs", a.jobs}};
  print_config("train", resolved);

  TrainHooks hooks;
  hooks.on_epoch = [](const EpochLog& e) {
    std::ostringstream os;
    os << "epoch " << e.epoch << " loss " << e.loss << " acc " << e.accuracy << " lr " << e.lr;
    log_info(os.str());
  };
  auto log = train(model, samples, tc, hooks);

  save_checkpoint(model, a.out);
  const fs::path out(a.out);
  write_text(out / "train_log.csv", log.to_csv());
  write_text(out / "train_log.json", log.to_json().dump(2) + "\n");
  write_text(out / "config.json", resolved.dump(2) + "\n");
  log_info("checkpoint written to " + a.out);
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const EvalConfig& ec, const std::string& report,
             const std::string& csv, std::optional<int> fold) {
  auto model = load_checkpoint<double>(ckpt);
  auto samples = load_samples(data, fold, std::nullopt, nullptr);
  print_config("eval", {{"ckpt", ckpt},
                        {"data", data},
                        {"ratios", ec.ratios},
                        {"stride", ec.stride},
                        {"seq_len", ec.window},
                        {"jobs", ec.jobs},
                        {"fold", fold ? json(*fold) : json(nullptr)},
                        {"arch", to_string(model.config.arch)}});
  auto rep = evaluate(model, samples, ec);
  if (!report.empty()) {
    auto j = rep.to_json();
    j["config"] = {{"ckpt", ckpt}, {"data", data}, {"stride", ec.stride}, {"seq_len", ec.window}};
    write_text(report, j.dump(2) + "\n");
  }
  if (!csv.empty()) write_text(csv, rep.to_csv());
  std::cout << rep.to_csv();
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& data, const std::string& id, double ratio,
                std::size_t stride, std::size_t seq_len) {
  auto model = load_checkpoint<double>(ckpt);
  auto samples = load_samples(data, std::nullopt, std::nullopt, nullptr);
  const auto& s = find_sample(samples, id);
  print_config("predict", {{"ckpt", ckpt}, {"data", data}, {"sample", id}, {"ratio", ratio},
                           {"stride", stride}, {"seq_len", seq_len}});
  auto prefix = truncate(s, ratio);
  auto p = predict_prefix(model, prefix, seq_len, stride);
  json out{{"sample", id},
           {"label", s.label},
           {"ratio", ratio},
           {"observed_frames", prefix.length()},
           {"predicted", p.predicted()},
           {"probs", std::vector<double>(p.probs.values().begin(), p.probs.values().end())}};
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_dump_attention(const std::string& ckpt, const std::string& data, const std::string& id,
                       const std::string& out, double ratio) {
  auto model = load_checkpoint<double>(ckpt);
  if (model.config.arch != Arch::tricoupled_attention) {
    throw ConfigError(std::string("--ckpt holds a '") + to_string(model.config.arch) +
                      "' model, which has no attention maps");
  }
  auto samples = load_samples(data, std::nullopt, std::nullopt, nullptr);
  const auto& s = find_sample(samples, id);
  print_config("dump-attention", {{"ckpt", ckpt}, {"data", data}, {"sample", id}, {"ratio", ratio}, {"out", out}});
  auto prefix = truncate(s, ratio);
  auto p = predict(model, prefix);
  const auto side = model.config.subject.side;
  auto a = dump_attention(p.attention1, side, out, id, "subject1");
  auto b = dump_attention(p.attention2, side, out, id, "subject2");
  log_info("wrote " + std::to_string(a.size() + b.size()) + " files to " + out);
  return 0;
}

int cmd_grad_check(const std::string& arch, std::uint64_t seed, double tol) {
  ModelConfig c;
  c.arch = arch_from_string(arch);
  c.hidden = 8;
  c.num_classes = 3;
  c.subject = {4, 3};
  c.global = {4, 3};
  c.dropout_rate = 0.0;
  print_config("grad-check", {{"model", to_json(c)}, {"seq_len", 3}, {"seed", seed}, {"tol", tol}});

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  auto model = Model<double>::zeros(c);
  for (auto* p : model.parameters())
    for (auto& v : p->value.values()) v = n(rng);
  InteractionSample<double> s;
  s.id = "probe";
  s.label = rng() % c.num_classes;
  for (auto* stream : {&s.subject1, &s.subject2, &s.global}) {
    *stream = Tensor<double>({3, 9, 4});
    for (auto& v : stream->values()) v = 2.0 * n(rng);
  }
  auto params = model.parameters();
  GradCheckOptions opts;
  opts.tol = tol;
  auto r = grad_check<double>(
      [&](Tape<double>& t) {
        ForwardOptions<double> o;
        o.label = s.label;
        return *forward(t, model, s, o).loss;
      },
      params, opts);
  json out{{"arch", arch},
           {"entries_checked", r.entries_checked},
           {"max_rel_error", r.max_rel_error},
           {"max_abs_error", r.max_abs_error},
           {"worst_param", r.worst_param},
           {"worst_index", r.worst_index},
           {"passed", r.passed}};
  std::cout << out.dump() << '\n';
  if (!r.passed) throw NumericalError("gradient check failed: max relative error " + std::to_string(r.max_rel_error));
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Tri-coupled relative-attention LSTM for early interaction prediction"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic dataset");
  std::string spec_path, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--spec", spec_path, "JSON generator spec")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "Override the spec's seed");

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  TrainArgs ta;
  int holdout = -1;
  tr->add_option("--data", ta.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--arch", ta.arch, "Architecture")
      ->check(CLI::IsMember({"global", "naive_fusion", "coupled", "tricoupled", "tricoupled_attention"}))
      ->capture_default_str();
  tr->add_option("--hidden", ta.hidden, "Hidden units per LSTM")->capture_default_str();
  tr->add_option("--seq-len", ta.seq_len, "Training window length L")->capture_default_str();
  tr->add_option("--epochs", ta.epochs)->capture_default_str();
  tr->add_option("--lr", ta.lr, "Initial learning rate")->capture_default_str();
  tr->add_option("--lr-decay-every", ta.decay_every)->capture_default_str();
  tr->add_option("--lr-decay-factor", ta.decay_factor)->capture_default_str();
  tr->add_option("--dropout", ta.dropout, "Dropout rate on the classifier input")->capture_default_str();
  tr->add_option("--momentum", ta.momentum)->capture_default_str();
  tr->add_option("--batch-size", ta.batch_size)->capture_default_str();
  tr->add_option("--loss-mode", ta.loss_mode)->check(CLI::IsMember({"last_step", "per_step_mean"}))->capture_default_str();
  tr->add_option("--peephole", ta.peephole)->check(CLI::IsMember({"full", "diagonal"}))->capture_default_str();
  tr->add_option("--seed", ta.seed)->capture_default_str();
  tr->add_option("--jobs", ta.jobs, "Worker threads")->capture_default_str();
  tr->add_option("--holdout-fold", holdout, "Exclude this fold from training");
  tr->add_option("--pretrained-global", ta.pretrained_global, "Checkpoint of a trained global model");
  tr->add_flag("--finetune-global", ta.finetune_global, "Keep training the pretrained global stream");
  tr->add_option("--out", ta.out, "Checkpoint directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Accuracy per observation ratio");
  std::string ev_ckpt, ev_data, ev_report, ev_csv;
  EvalConfig ec;
  int ev_fold = -1;
  ev->add_option("--ckpt", ev_ckpt)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data", ev_data)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--ratios", ec.ratios, "Comma-separated observation ratios")->delimiter(',');
  ev->add_option("--stride", ec.stride)->capture_default_str();
  ev->add_option("--seq-len", ec.window)->capture_default_str();
  ev->add_option("--jobs", ec.jobs)->capture_default_str();
  ev->add_option("--fold", ev_fold, "Evaluate only this fold");
  ev->add_option("--report", ev_report, "Write the JSON report here");
  ev->add_option("--csv", ev_csv, "Write ratio,accuracy CSV here");

  // predict
  auto* pr = app.add_subcommand("predict", "Predict one sample from a prefix");
  std::string pr_ckpt, pr_data, pr_sample;
  double pr_ratio = 1.0;
  std::size_t pr_stride = 5, pr_len = 10;
  pr->add_option("--ckpt", pr_ckpt)->required()->check(CLI::ExistingDirectory);
  pr->add_option("--data", pr_data)->required()->check(CLI::ExistingDirectory);
  pr->add_option("--sample", pr_sample)->required();
  pr->add_option("--ratio", pr_ratio)->capture_default_str();
  pr->add_option("--stride", pr_stride)->capture_default_str();
  pr->add_option("--seq-len", pr_len)->capture_default_str();

  // dump-attention
  auto* da = app.add_subcommand("dump-attention", "Export attention maps as CSV and PGM");
  std::string da_ckpt, da_data, da_sample, da_out;
  double da_ratio = 1.0;
  da->add_option("--ckpt", da_ckpt)->required()->check(CLI::ExistingDirectory);
  da->add_option("--data", da_data)->required()->check(CLI::ExistingDirectory);
  da->add_option("--sample", da_sample)->required();
  da->add_option("--ratio", da_ratio)->capture_default_str();
  da->add_option("--out", da_out)->required();

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check at tiny dims");
  std::string gc_arch, gc_dims = "tiny";
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  gc->add_option("--arch", gc_arch)
      ->required()
      ->check(CLI::IsMember({"global", "naive_fusion", "coupled", "tricoupled", "tricoupled_attention"}));
  gc->add_option("--dims", gc_dims)->check(CLI::IsMember({"tiny"}))->capture_default_str();
  gc->add_option("--seed", gc_seed)->capture_default_str();
  gc->add_option("--tol", gc_tol)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    g_verbosity = verbosity_from_env();
    if (*gen) return cmd_gen_synthetic(spec_path, gen_out, gen_seed);
    if (*tr) {
      if (holdout >= 0) ta.holdout_fold = holdout;
      return cmd_train(ta);
    }
    if (*ev) return cmd_eval(ev_ckpt, ev_data, ec, ev_report, ev_csv, ev_fold >= 0 ? std::optional(ev_fold) : std::nullopt);
    if (*pr) return cmd_predict(pr_ckpt, pr_data, pr_sample, pr_ratio, pr_stride, pr_len);
    if (*da) return cmd_dump_attention(da_ckpt, da_data, da_sample, da_out, da_ratio);
    if (*gc) return cmd_grad_check(gc_arch, gc_seed, gc_tol);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
