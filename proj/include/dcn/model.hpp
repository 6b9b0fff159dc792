#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "dcn/coattn.hpp"
#include "dcn/config.hpp"
#include "dcn/encoder.hpp"
#include "dcn/predict.hpp"

namespace dcn {

// One question plus the four max-pooled feature levels (C_j x T each).
struct ModelInput {
  TokenSequence question;
  std::array<Tensor, kNumLevels> pooled;
};

struct ForwardResult {
  Var Q0;                  // d x N encoded question
  Var V0;                  // d x T fused image
  Var layer_alpha;         // 4 x 1 weights over feature levels
  std::vector<coattn::LayerOutput> layers;
  predict::Summary question_summary;
  predict::Summary image_summary;
  Var scores;              // |answers| x 1, each in (0,1)
};

// Token sequence of every candidate answer, in answer-index order.
std::vector<TokenSequence> answer_tokens(const DcnConfig& cfg);

// Every learnable tensor of the network described by cfg, in creation order.
// The frozen embedding table is not included.
std::vector<ParamSpec> model_param_specs(const DcnConfig& cfg);

class DcnModel {
 public:
  DcnModel(const DcnConfig& cfg, std::uint64_t seed);

  DcnModel(DcnModel&&) = default;
  DcnModel& operator=(DcnModel&&) = default;

  ForwardResult forward(Graph& g, const ModelInput& input, const DropoutContext& drop = {}) const;
  // Convenience: evaluation-mode scores only.
  Tensor predict_scores(const ModelInput& input) const;

  const DcnConfig& config() const { return cfg_; }
  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }
  const Tensor& embedding() const { return embedding_; }

  // Directory of <name>.dcnt files plus manifest.json.
  void save(const std::filesystem::path& dir) const;
  static DcnModel load(const std::filesystem::path& dir);

 private:
  void bind();

  DcnConfig cfg_;
  std::unique_ptr<ParamStore> store_;
  Tensor embedding_;
  std::vector<TokenSequence> answers_;
  encoder::LstmParams lstm_;
  encoder::LayerAttnParams layer_attn_;
  std::vector<coattn::CoAttnLayerParams> layers_;
  predict::MlpParams summary_q_;
  predict::MlpParams summary_v_;
  predict::MlpParams head_mlp_;
  const Parameter* head_inner_ = nullptr;
};

}  // namespace dcn
