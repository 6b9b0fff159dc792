#include "dcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

#include "dcn/ops.hpp"

namespace dcn {

void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(cfg.beta1, t);
  const double correct2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params[i]->value;
    const Tensor& g = grads[i];
    if (g.shape() != theta.shape()) {
      throw DimensionError("adam_step: gradient " + shape_str(g.shape()) + " for parameter " +
                           params[i]->name + " " + shape_str(theta.shape()));
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g[k] + cfg.weight_decay * theta[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double m_hat = m[k] / correct1;
      const double v_hat = v[k] / correct2;
      theta[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

double lr_at(double epoch, const TrainConfig& cfg) {
  if (epoch < 0.0) throw ConfigError("lr_at: epoch must be non-negative");
  return std::pow(0.5, epoch / cfg.decay_epochs) * cfg.alpha0;
}

Tensor one_hot(std::size_t index, std::size_t n) {
  Tensor t({n, 1});
  t[index] = 1.0;
  return t;
}

std::size_t argmax(const Tensor& scores) {
  return static_cast<std::size_t>(
      std::distance(scores.values().begin(), std::max_element(scores.values().begin(), scores.values().end())));
}

std::size_t threads_from_env() {
  if (const char* v = std::getenv("DCN_THREADS")) {
    const long n = std::strtol(v, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return 1;
}

namespace {

// Runs fn(i) for i in [0, n), split over up to `threads` workers in
// contiguous chunks.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct SampleGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

SampleGrad sample_gradient(const DcnModel& model, const Dataset& ds, std::size_t index,
                           std::optional<std::uint64_t> dropout_seed) {
  const auto& tc = model.config().train;
  Rng rng(dropout_seed ? derive_seed({*dropout_seed, index}) : 0);
  DropoutContext drop;
  if (dropout_seed) drop = DropoutContext{&rng, tc.dropout_fc, tc.dropout_lstm};
  Graph g;
  const ForwardResult r = model.forward(g, ds.inputs[index], drop);
  const Var loss = predict::multilabel_loss(r.scores, one_hot(ds.oracle[index], model.config().n_answers()));
  SampleGrad out;
  out.loss = loss.value()[0];
  if (!std::isfinite(out.loss)) return out;
  g.backward(loss);
  out.grads.resize(model.params().size());
  g.accumulate_param_grads(out.grads);
  return out;
}

}  // namespace

double batch_gradient(const DcnModel& model, const Dataset& ds, std::span<const std::size_t> batch,
                      std::vector<Tensor>& grads, std::optional<std::uint64_t> dropout_seed,
                      std::size_t threads) {
  if (batch.empty()) throw InputError("batch_gradient: empty batch");
  grads = model.params().zero_grads();
  std::vector<SampleGrad> per_sample(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    per_sample[i] = sample_gradient(model, ds, batch[i], dropout_seed);
  });
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SampleGrad& sg = per_sample[i];
    if (!std::isfinite(sg.loss)) {
      throw NumericalError("non-finite loss at sample " + std::to_string(batch[i]));
    }
    loss += sg.loss;
    for (std::size_t k = 0; k < grads.size(); ++k) {
      const Tensor& g = sg.grads[k];
      if (g.empty()) continue;
      for (std::size_t e = 0; e < g.size(); ++e) grads[k][e] += g[e];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grads)
    for (auto& v : g.values()) v *= inv;
  return loss * inv;
}

namespace {

void dump_batch(const std::filesystem::path& path, const Dataset& ds, std::span<const std::size_t> batch,
                const std::string& what) {
  std::ofstream out(path);
  out << "# " << what << '\n';
  std::vector<SyntheticSample> samples;
  for (auto i : batch) samples.push_back(ds.samples[i]);
  write_samples(out, samples);
}

}  // namespace

TrainResult train_loop(DcnModel& model, const Dataset& train, const Dataset& test, const TrainOptions& opts) {
  const DcnConfig& cfg = model.config();
  const TrainConfig& tc = cfg.train;
  if (train.empty()) throw InputError("train_loop: empty training set");
  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);

  const std::size_t steps_per_epoch = (train.size() + tc.batch_size - 1) / tc.batch_size;
  auto params = model.params().pointers();
  AdamState adam;
  TrainResult result;
  std::vector<Tensor> grads;
  std::vector<std::size_t> order(train.size());
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed({tc.seed, 0x5EED, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = b * tc.batch_size;
      const std::size_t end = std::min(train.size(), begin + tc.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      double loss = 0.0;
      try {
        loss = batch_gradient(model, train, batch, grads, derive_seed({tc.seed, 0xD809, step}), opts.threads);
      } catch (const NumericalError& e) {
        if (opts.out_dir) dump_batch(*opts.out_dir / "nan_batch.txt", train, batch, e.what());
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(step) + ")");
      }
      lr = lr_at(static_cast<double>(step) / static_cast<double>(steps_per_epoch), tc);
      adam_step(params, grads, adam, lr, tc);
      loss_sum += loss * static_cast<double>(batch.size());
      ++step;
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.step = step;
    m.lr = lr;
    m.loss = loss_sum / static_cast<double>(train.size());
    m.accuracy = test.empty() ? 0.0 : evaluate(model, test, opts.threads).accuracy;
    result.log.push_back(m);
    if (opts.on_epoch) opts.on_epoch(m);
    if (result.best_epoch == 0 || m.accuracy > result.best_accuracy) {
      result.best_accuracy = m.accuracy;
      result.best_epoch = m.epoch;
      if (opts.out_dir) model.save(*opts.out_dir / "checkpoint");
    }
    if (opts.out_dir) write_metric_log(*opts.out_dir / "metrics.csv", result.log);
    if (m.accuracy >= opts.stop_at_accuracy) break;
  }
  return result;
}

EvalResult evaluate(const DcnModel& model, const Dataset& ds, std::size_t threads) {
  if (ds.empty()) throw InputError("evaluate: empty dataset");
  EvalResult r;
  r.per_class.resize(model.config().n_answers());
  r.predictions.resize(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t i) { r.predictions[i] = argmax(model.predict_scores(ds.inputs[i])); });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t truth = ds.oracle[i];
    auto& cls = r.per_class.at(truth);
    ++cls.total;
    if (r.predictions[i] == truth) {
      ++cls.correct;
      ++correct;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  return r;
}

std::vector<LayerStats> layer_stats_from_alphas(
    const std::map<std::size_t, std::vector<std::array<double, kNumLevels>>>& groups) {
  std::vector<LayerStats> out;
  for (const auto& [type, alphas] : groups) {
    if (alphas.empty()) {
      std::cerr << "warning: question type " << type << " has no samples; skipped\n";
      continue;
    }
    LayerStats s;
    s.question_type = type;
    s.count = alphas.size();
    const double n = static_cast<double>(alphas.size());
    for (const auto& a : alphas)
      for (std::size_t j = 0; j < kNumLevels; ++j) s.mean[j] += a[j];
    for (auto& m : s.mean) m /= n;
    for (const auto& a : alphas)
      for (std::size_t j = 0; j < kNumLevels; ++j) s.stddev[j] += (a[j] - s.mean[j]) * (a[j] - s.mean[j]);
    for (auto& v : s.stddev) v = std::sqrt(v / n);
    out.push_back(s);
  }
  return out;
}

std::vector<LayerStats> layer_attention_stats(const DcnModel& model, const Dataset& ds) {
  std::map<std::size_t, std::vector<std::array<double, kNumLevels>>> groups;
  for (std::size_t t = 0; t < kQuestionTypes; ++t) groups[t];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Graph g;
    const ForwardResult r = model.forward(g, ds.inputs[i]);
    std::array<double, kNumLevels> a{};
    for (std::size_t j = 0; j < kNumLevels; ++j) a[j] = r.layer_alpha.value()[j];
    groups[ds.samples[i].question_type].push_back(a);
  }
  return layer_stats_from_alphas(groups);
}

void write_layer_stats_csv(const std::filesystem::path& path, const std::vector<LayerStats>& stats) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "question_type,mean_1,mean_2,mean_3,mean_4,std_1,std_2,std_3,std_4\n";
  char buf[64];
  for (const auto& s : stats) {
    out << s.question_type;
    for (double v : s.mean) {
      std::snprintf(buf, sizeof buf, ",%.10f", v);
      out << buf;
    }
    for (double v : s.stddev) {
      std::snprintf(buf, sizeof buf, ",%.10f", v);
      out << buf;
    }
    out << '\n';
  }
}

void write_metric_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,step,lr,loss,accuracy\n";
  char buf[160];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g\n", m.epoch, m.step, m.lr, m.loss, m.accuracy);
    out << buf;
  }
}

namespace {

std::vector<double> baseline_features(const DcnConfig& cfg, const ModelInput& in) {
  std::vector<double> x;
  for (const Tensor& level : in.pooled) {
    const std::size_t rows = level.rows(), cols = level.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      double m = 0.0;
      for (std::size_t c = 0; c < cols; ++c) m += level.at(r, c);
      x.push_back(m / static_cast<double>(cols));
    }
  }
  std::vector<double> bow(cfg.vocab_size(), 0.0);
  for (auto tok : in.question) bow.at(tok) += 1.0;
  x.insert(x.end(), bow.begin(), bow.end());
  x.push_back(1.0);  // bias
  return x;
}

}  // namespace

BaselineResult train_mean_pool_baseline(const DcnConfig& cfg, const Dataset& train, const Dataset& test,
                                        std::size_t epochs, std::uint64_t seed) {
  if (train.empty() || test.empty()) throw InputError("baseline needs non-empty train and test sets");
  const std::size_t classes = cfg.n_answers();
  std::vector<std::vector<double>> xtr, xte;
  for (const auto& in : train.inputs) xtr.push_back(baseline_features(cfg, in));
  for (const auto& in : test.inputs) xte.push_back(baseline_features(cfg, in));
  const std::size_t f = xtr[0].size();

  Parameter W{"baseline.W", Tensor({classes, f}), 0};
  std::vector<Tensor> grads{Tensor({classes, f})};
  AdamState adam;
  TrainConfig tc;
  tc.weight_decay = 0.0;
  std::vector<Parameter*> params{&W};

  auto logits = [&](const std::vector<double>& x) {
    std::vector<double> z(classes, 0.0);
    for (std::size_t k = 0; k < classes; ++k)
      for (std::size_t i = 0; i < f; ++i) z[k] += W.value.at(k, i) * x[i];
    return z;
  };
  auto accuracy = [&](const std::vector<std::vector<double>>& xs, const Dataset& ds) {
    std::size_t ok = 0;
    for (std::size_t n = 0; n < xs.size(); ++n) {
      const auto z = logits(xs[n]);
      ok += static_cast<std::size_t>(std::distance(z.begin(), std::max_element(z.begin(), z.end()))) == ds.oracle[n];
    }
    return static_cast<double>(ok) / static_cast<double>(xs.size());
  };

  std::vector<std::size_t> order(xtr.size());
  const std::size_t batch = 64;
  for (std::size_t ep = 0; ep < epochs; ++ep) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed({seed, 0xBA5E, ep}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += batch) {
      grads[0].fill(0.0);
      const std::size_t end = std::min(order.size(), b + batch);
      for (std::size_t n = b; n < end; ++n) {
        const auto& x = xtr[order[n]];
        auto z = logits(x);
        const double mx = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (auto& v : z) total += (v = std::exp(v - mx));
        for (std::size_t k = 0; k < classes; ++k) {
          const double delta = z[k] / total - (k == train.oracle[order[n]] ? 1.0 : 0.0);
          for (std::size_t i = 0; i < f; ++i) grads[0].at(k, i) += delta * x[i] / static_cast<double>(end - b);
        }
      }
      adam_step(params, grads, adam, 0.01, tc);
    }
  }
  return {accuracy(xtr, train), accuracy(xte, test)};
}

}  // namespace dcn
