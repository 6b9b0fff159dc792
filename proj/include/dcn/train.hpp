#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcn/config.hpp"
#include "dcn/dataset.hpp"
#include "dcn/model.hpp"

namespace dcn {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;
};

// One Adam update with bias correction. The L2 term weight_decay * theta is
// added to the gradient before the moment update.
void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads, AdamState& state,
               double lr, const TrainConfig& cfg);

// alpha0 * 0.5^(epoch / decay_epochs), continuous in epoch.
double lr_at(double epoch, const TrainConfig& cfg);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer steps so far
  double lr = 0.0;        // rate used by the last step of the epoch
  double loss = 0.0;      // mean training loss over the epoch
  double accuracy = 0.0;  // exact-match test accuracy after the epoch
};

struct TrainOptions {
  // When set, the metric log, best checkpoint and any NaN dump go here.
  std::optional<std::filesystem::path> out_dir;
  std::size_t threads = 1;
  // Stop once test accuracy reaches this value (1.1 disables).
  double stop_at_accuracy = 1.1;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  double best_accuracy = 0.0;
  std::size_t best_epoch = 0;
};

// Mini-batch training; the batch gradient is the mean of per-sample
// gradients reduced in sample-index order, so the result does not depend on
// the thread count. Throws NumericalError on a non-finite loss.
TrainResult train_loop(DcnModel& model, const Dataset& train, const Dataset& test,
                       const TrainOptions& opts = {});

// Mean loss and gradient of a batch (indices into ds) at evaluation or
// training mode; used by train_loop and the overfit checks.
double batch_gradient(const DcnModel& model, const Dataset& ds, std::span<const std::size_t> batch,
                      std::vector<Tensor>& grads, std::optional<std::uint64_t> dropout_seed,
                      std::size_t threads = 1);

Tensor one_hot(std::size_t index, std::size_t n);

struct ClassStats {
  std::size_t total = 0;
  std::size_t correct = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<ClassStats> per_class;  // indexed by true answer
  std::vector<std::size_t> predictions;
};

std::size_t argmax(const Tensor& scores);
// Exact match of argmax score against the oracle answer. Throws InputError for
// an empty dataset.
EvalResult evaluate(const DcnModel& model, const Dataset& ds, std::size_t threads = 1);

struct LayerStats {
  std::size_t question_type = 0;
  std::size_t count = 0;
  std::array<double, kNumLevels> mean{};
  std::array<double, kNumLevels> stddev{};  // population standard deviation
};

// Mean and standard deviation of each layer weight within each group. Empty
// groups are skipped with a warning on stderr.
std::vector<LayerStats> layer_stats_from_alphas(
    const std::map<std::size_t, std::vector<std::array<double, kNumLevels>>>& groups);
std::vector<LayerStats> layer_attention_stats(const DcnModel& model, const Dataset& ds);
void write_layer_stats_csv(const std::filesystem::path& path, const std::vector<LayerStats>& stats);

// Region-blind baseline: multinomial logistic regression over the
// region-averaged pooled features and the question's bag of words.
struct BaselineResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};
BaselineResult train_mean_pool_baseline(const DcnConfig& cfg, const Dataset& train, const Dataset& test,
                                        std::size_t epochs = 30, std::uint64_t seed = 1);

void write_metric_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& log);

// Threads requested through DCN_THREADS, defaulting to 1.
std::size_t threads_from_env();

}  // namespace dcn
