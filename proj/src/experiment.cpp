#include "dcn/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include "dcn/ops.hpp"

namespace dcn {

SplitData make_splits(const DcnConfig& cfg) {
  const SyntheticTask task(cfg);
  SplitData s;
  s.train = task.generate_dataset(cfg.data.n_train, derive_seed({cfg.data.data_seed, 1}));
  s.test = task.generate_dataset(cfg.data.n_test, derive_seed({cfg.data.data_seed, 2}));
  return s;
}

ExperimentResult run_experiment(const DcnConfig& cfg, const SplitData& data, const TrainOptions& opts) {
  DcnModel model(cfg, cfg.train.seed);
  ExperimentResult r;
  r.train = train_loop(model, data.train, data.test, opts);
  r.final_accuracy = r.train.log.empty() ? 0.0 : r.train.log.back().accuracy;
  return r;
}

DcnConfig desk_config() {
  DcnConfig c;
  c.L = 2;
  c.train.alpha0 = 0.003;
  c.train.weight_decay = 0.0;
  return c;
}

DcnConfig gradcheck_config() {
  DcnConfig c;
  c.d = 8;
  c.h = 2;
  c.K = 1;
  c.L = 2;
  c.T = 4;
  c.N_max = 6;
  c.e = 4;
  c.c = 2;
  c.layer_attn_hidden = 6;
  c.summary_hidden = 5;
  c.head_hidden = 7;
  c.head = HeadVariant::SumMlp;
  c.data.n_objects = 4;
  c.data.n_attributes = 4;
  return c;
}

ModelInput random_input(const DcnConfig& cfg, std::size_t n_tokens, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> tok(1, cfg.vocab_size() - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ModelInput in;
  for (std::size_t i = 0; i < n_tokens; ++i) in.question.push_back(tok(rng));
  for (std::size_t j = 0; j < kNumLevels; ++j) {
    in.pooled[j] = Tensor::matrix(cfg.level_channels(j), cfg.T);
    for (double& x : in.pooled[j].values()) x = gauss(rng);
  }
  return in;
}

GradCheckReport model_grad_check(DcnModel& model, const ModelInput& input, std::size_t answer, double step,
                                 double tol) {
  const Tensor target = one_hot(answer, model.config().n_answers());
  const auto loss = [&](Graph& g) {
    const ForwardResult r = model.forward(g, input);
    return ops::bce_loss(r.scores, target);
  };
  const auto ptrs = model.params().pointers();
  return grad_check(loss, ptrs, step, tol);
}

std::vector<AblationVariant> ablation_grid(const DcnConfig& base) {
  std::vector<AblationVariant> grid;
  auto star = [](bool is_base, std::string s) { return is_base ? s + "*" : s; };
  auto add = [&](std::string category, std::string detail, auto mutate) {
    DcnConfig c = base;
    mutate(c);
    grid.push_back({std::move(category), std::move(detail), c});
  };

  const std::pair<DirectionMode, const char*> dirs[] = {
      {DirectionMode::QuestionGuided, "I <- Q"},
      {DirectionMode::ImageGuided, "I -> Q"},
      {DirectionMode::Both, "I <-> Q"},
  };
  for (const auto& [mode, label] : dirs) {
    add("Attention direction", star(mode == base.direction, label), [m = mode](DcnConfig& c) { c.direction = m; });
  }
  for (std::size_t k : {1, 3, 5}) {
    add("Memory size (K)", star(k == base.K, std::to_string(k)), [k](DcnConfig& c) { c.K = k; });
  }
  for (std::size_t h : {2, 4, 8}) {
    add("Parallel attention (h)", star(h == base.h, std::to_string(h)), [h](DcnConfig& c) { c.h = h; });
  }
  for (std::size_t l : {1, 2, 3, 4}) {
    add("Stacked layers (L)", star(l == base.L, std::to_string(l)), [l](DcnConfig& c) { c.L = l; });
  }
  add("Attention in answer prediction", star(base.summary == SummaryMode::Average, "Avg of features"),
      [](DcnConfig& c) { c.summary = SummaryMode::Average; });
  add("Attention in answer prediction", star(base.summary == SummaryMode::Attention, "Self-attention"),
      [](DcnConfig& c) { c.summary = SummaryMode::Attention; });
  add("Attention in feature extraction", star(base.extraction == ExtractionMode::LastLayer, "Only last conv layer"),
      [](DcnConfig& c) { c.extraction = ExtractionMode::LastLayer; });
  add("Attention in feature extraction",
      star(base.extraction == ExtractionMode::LayerAttention, "Attention on four layers"),
      [](DcnConfig& c) { c.extraction = ExtractionMode::LayerAttention; });
  return grid;
}

std::vector<AblationRow> run_ablation(const DcnConfig& base, std::size_t threads) {
  const SplitData data = make_splits(base);
  std::map<std::string, double> cache;
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_grid(base)) {
    AblationRow row{v.category, v.detail, std::nan(""), ""};
    const std::string key = to_json(v.config).dump();
    if (auto it = cache.find(key); it != cache.end()) {
      row.accuracy = it->second;
    } else {
      try {
        v.config.validate();
        TrainOptions opts;
        opts.threads = threads;
        row.accuracy = run_experiment(v.config, data, opts).train.best_accuracy;
        cache.emplace(key, row.accuracy);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "category,detail,accuracy\n";
  char buf[32];
  for (const auto& r : rows) {
    out << '"' << r.category << "\",\"" << r.detail << "\",";
    if (r.error.empty()) {
      std::snprintf(buf, sizeof buf, "%.4f", 100.0 * r.accuracy);
      out << buf << '\n';
    } else {
      out << "error\n";
    }
  }
}

}  // namespace dcn
