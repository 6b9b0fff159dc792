// dcn: train, evaluate and inspect dense co-attention networks on the
// synthetic region-lookup task.
//
// Exit codes: 0 ok, 1 input/IO error, 2 configuration error, 3 numerical
// failure (non-finite loss or failed gradient check).

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dcn/config.hpp"
#include "dcn/experiment.hpp"
#include "dcn/export.hpp"
#include "dcn/train.hpp"

namespace fs = std::filesystem;
using namespace dcn;

namespace {

struct Common {
  std::string config_path;
  std::string out = "runs/latest";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file (default: the desk preset)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Training seed (overrides the config)");
  cmd->add_option("--set", c.sets, "Override a config key, key=value (repeatable)");
}

DcnConfig resolve(const Common& c) {
  DcnConfig cfg = c.config_path.empty() ? desk_config() : load_config(c.config_path);
  for (const auto& s : c.sets) apply_override(cfg, s);
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void print_epoch(const EpochMetrics& m) {
  std::printf("epoch %2zu  step %6zu  lr %.6f  loss %.5f  acc %.4f\n", m.epoch, m.step, m.lr, m.loss,
              m.accuracy);
  std::fflush(stdout);
}

Dataset load_eval_data(const DcnConfig& cfg, const std::string& samples_path) {
  const SyntheticTask task(cfg);
  if (!samples_path.empty()) return task.build(read_samples(samples_path, cfg));
  return make_splits(cfg).test;
}

int cmd_train(const Common& c) {
  const DcnConfig cfg = resolve(c);
  fs::create_directories(c.out);
  {
    std::ofstream(fs::path(c.out) / "config.json") << to_json(cfg).dump(2) << '\n';
  }
  const auto t0 = std::chrono::steady_clock::now();
  const SplitData data = make_splits(cfg);
  write_samples((fs::path(c.out) / "test_samples.txt").string(), data.test.samples);

  TrainOptions opts;
  opts.out_dir = fs::path(c.out);
  opts.threads = threads_from_env();
  opts.on_epoch = print_epoch;
  const ExperimentResult r = run_experiment(cfg, data, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("best accuracy %.4f at epoch %zu (%.1f s)\n", r.train.best_accuracy, r.train.best_epoch, secs);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& samples, const std::string& out) {
  const DcnModel model = DcnModel::load(checkpoint);
  const Dataset ds = load_eval_data(model.config(), samples);
  const EvalResult r = evaluate(model, ds, threads_from_env());
  std::printf("accuracy %.4f over %zu samples\n", r.accuracy, ds.size());
  for (std::size_t a = 0; a < r.per_class.size(); ++a) {
    const auto& s = r.per_class[a];
    if (s.total) std::printf("  answer %zu: %zu/%zu\n", a, s.correct, s.total);
  }
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "predictions.csv");
    f << "index,prediction,oracle\n";
    for (std::size_t i = 0; i < ds.size(); ++i) f << i << ',' << r.predictions[i] << ',' << ds.oracle[i] << '\n';
  }
  return 0;
}

int cmd_ablate(const Common& c) {
  const DcnConfig cfg = resolve(c);
  fs::create_directories(c.out);
  const auto rows = run_ablation(cfg, threads_from_env());
  const fs::path csv = fs::path(c.out) / "ablation.csv";
  write_ablation_csv(csv, rows);
  for (const auto& r : rows) {
    if (r.error.empty()) {
      std::printf("%-32s %-26s %7.2f\n", r.category.c_str(), r.detail.c_str(), 100.0 * r.accuracy);
    } else {
      std::printf("%-32s %-26s error: %s\n", r.category.c_str(), r.detail.c_str(), r.error.c_str());
    }
  }
  std::printf("wrote %s\n", csv.string().c_str());
  return 0;
}

int cmd_gradcheck(const Common& c, double step, double tol, std::size_t n_tokens) {
  DcnConfig cfg = gradcheck_config();
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  for (const auto& s : c.sets) apply_override(cfg, s);
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.validate();
  DcnModel model(cfg, cfg.train.seed);
  const ModelInput in = random_input(cfg, n_tokens, derive_seed({cfg.train.seed, 0x6C}));
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckReport rep = model_grad_check(model, in, 0, step, tol);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& b : rep.blocks) {
    std::printf("%-32s %6zu  %.3e\n", b.name.c_str(), b.entries, b.max_rel_error);
  }
  std::printf("max relative error %.3e over %zu entries (%.1f s): %s\n", rep.max_rel_error, rep.entries_checked,
              secs, rep.passed ? "PASS" : "FAIL");
  return rep.passed ? 0 : 3;
}

int cmd_export(const std::string& checkpoint, const std::string& samples, const std::string& out,
               std::size_t limit) {
  const DcnModel model = DcnModel::load(checkpoint);
  const Dataset ds = load_eval_data(model.config(), samples);
  const std::size_t n = std::min(limit, ds.size());
  for (std::size_t i = 0; i < n; ++i) export_attention(model, ds.inputs[i], out, i);
  std::printf("exported %zu samples to %s\n", n, out.c_str());
  return 0;
}

int cmd_layer_stats(const std::string& checkpoint, const std::string& samples, const std::string& out) {
  const DcnModel model = DcnModel::load(checkpoint);
  const Dataset ds = load_eval_data(model.config(), samples);
  const auto stats = layer_attention_stats(model, ds);
  fs::create_directories(out);
  const fs::path csv = fs::path(out) / "layer_stats.csv";
  write_layer_stats_csv(csv, stats);
  for (const auto& s : stats) {
    std::printf("type %zu (n=%zu):", s.question_type, s.count);
    for (std::size_t j = 0; j < kNumLevels; ++j) std::printf("  %.3f+-%.3f", s.mean[j], s.stddev[j]);
    std::printf("\n");
  }
  std::printf("wrote %s\n", csv.string().c_str());
  return 0;
}

int cmd_count(const Common& c, bool full_scale, int head) {
  DcnConfig cfg;
  if (full_scale) {
    cfg = full_scale_config(static_cast<HeadVariant>(head));
    for (const auto& s : c.sets) apply_override(cfg, s);
    cfg.validate();
  } else {
    cfg = resolve(c);
  }
  const auto specs = model_param_specs(cfg);
  const auto count = predict::count_params(specs);
  for (const auto& [module, n] : count.by_module) std::printf("%-10s %12zu\n", module.c_str(), n);
  std::printf("%-10s %12zu\n", "total", count.total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense co-attention networks on a synthetic visual lookup task"};
  app.require_subcommand(1);

  Common common;
  std::string checkpoint, samples, out;
  double step = 1e-5, tol = 1e-4;
  std::size_t n_tokens = 3, limit = 8;
  bool full_scale = false;
  int head = 17;

  auto* train = app.add_subcommand("train", "Train on the synthetic task");
  add_common(train, common);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--samples", samples, "Sample file (defaults to the regenerated test split)");
  eval->add_option("--out", out, "Write predictions.csv here");

  auto* ablate = app.add_subcommand("ablate", "Run the one-axis-at-a-time ablation grid");
  add_common(ablate, common);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  add_common(gc, common);
  gc->add_option("--step", step, "Central-difference step");
  gc->add_option("--tol", tol, "Relative error tolerance");
  gc->add_option("--tokens", n_tokens, "Question length");

  auto* exp = app.add_subcommand("export-attn", "Write attention maps as CSV and PGM");
  exp->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  exp->add_option("--samples", samples, "Sample file (defaults to the regenerated test split)");
  exp->add_option("--out", out, "Output directory")->required();
  exp->add_option("--limit", limit, "Number of samples to export");

  auto* ls = app.add_subcommand("layer-stats", "Layer-attention weights grouped by question type");
  ls->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  ls->add_option("--samples", samples, "Sample file (defaults to the regenerated test split)");
  ls->add_option("--out", out, "Output directory")->required();

  auto* cp = app.add_subcommand("count-params", "Count learnable parameters per module");
  add_common(cp, common);
  cp->add_flag("--full-scale", full_scale, "Use d=1024, T=196, 3113 answers");
  cp->add_option("--head", head, "Head variant for --full-scale (16, 17 or 18)")
      ->check(CLI::IsMember({16, 17, 18}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(checkpoint, samples, out);
    if (*ablate) return cmd_ablate(common);
    if (*gc) return cmd_gradcheck(common, step, tol, n_tokens);
    if (*exp) return cmd_export(checkpoint, samples, out, limit);
    if (*ls) return cmd_layer_stats(checkpoint, samples, out);
    if (*cp) return cmd_count(common, full_scale, head);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
