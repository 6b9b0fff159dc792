#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcn/config.hpp"
#include "dcn/dataset.hpp"
#include "dcn/gradcheck.hpp"
#include "dcn/train.hpp"

namespace dcn {

struct SplitData {
  Dataset train;
  Dataset test;
};

// Train and test splits of the synthetic task described by cfg.data.
SplitData make_splits(const DcnConfig& cfg);

struct ExperimentResult {
  TrainResult train;
  double final_accuracy = 0.0;
};

// Builds a model from cfg (seeded with cfg.train.seed) and trains it on the
// given splits.
ExperimentResult run_experiment(const DcnConfig& cfg, const SplitData& data, const TrainOptions& opts = {});

// Settings for the synthetic task at desk scale: two stacked layers,
// alpha0 = 0.003 and no weight decay. With the usual 1e-4 decay the
// co-attention projections shrink to zero before the attention maps pick up
// any signal (Adam rescales the decay term to a full lr-sized step).
DcnConfig desk_config();

// Small network for full-model gradient checks: d=8, h=2, K=1, L=2, T=4,
// summed-MLP head, two channels at the coarsest level.
DcnConfig gradcheck_config();

// Random question of n_tokens ids and standard-normal pooled features.
ModelInput random_input(const DcnConfig& cfg, std::size_t n_tokens, std::uint64_t seed);

// Gradient check of the multi-label loss of one sample against a one-hot
// target, over every learnable tensor of the model. Dropout is off.
GradCheckReport model_grad_check(DcnModel& model, const ModelInput& input, std::size_t answer,
                                 double step = 1e-5, double tol = 1e-4);

struct AblationVariant {
  std::string category;
  std::string detail;  // a trailing '*' marks the baseline setting
  DcnConfig config;
};

// Axes varied one at a time from the baseline: direction (3), K in {1,3,5},
// h in {2,4,8}, L in {1,2,3,4}, summary mode (2), extraction mode (2).
std::vector<AblationVariant> ablation_grid(const DcnConfig& base);

struct AblationRow {
  std::string category;
  std::string detail;
  double accuracy = 0.0;
  std::string error;  // non-empty if the variant failed
};

// Runs every variant; a failing variant is recorded and the grid continues.
// Variants whose config equals an earlier one reuse its result.
std::vector<AblationRow> run_ablation(const DcnConfig& base, std::size_t threads = 1);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace dcn
