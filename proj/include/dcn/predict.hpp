#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dcn/config.hpp"
#include "dcn/dropout.hpp"
#include "dcn/graph.hpp"
#include "dcn/params.hpp"

namespace dcn::predict {

// Two-layer MLP in -> hidden -> out with ReLU on the hidden layer, applied
// independently to every column of its input.
struct MlpParams {
  const Parameter* W1 = nullptr;
  const Parameter* b1 = nullptr;
  const Parameter* W2 = nullptr;
  const Parameter* b2 = nullptr;
};

std::vector<ParamSpec> mlp_specs(const std::string& prefix, std::size_t in, std::size_t hidden,
                                 std::size_t out, const std::string& module);
MlpParams bind_mlp(ParamStore& store, const std::string& prefix);
Var mlp_forward(Var x, const MlpParams& p, const DropoutContext& drop = {});

struct Summary {
  Var s;      // d x 1
  Var alpha;  // M x 1
};

// alpha = softmax of per-column scores, s = sum_m alpha_m x_m. With a null
// mlp the weights are uniform (plain column average).
Summary self_attend_summary(Var X, const MlpParams* mlp, const DropoutContext& drop = {});

// sigmoid(s_A^T W (s_Q + s_V)) for every answer column of S_A (d x A); A x 1.
Var score_inner(Var s_Q, Var s_V, Var S_A, Var W);
// sigmoid(MLP(s_Q + s_V)); |answers| x 1.
Var score_sum_mlp(Var s_Q, Var s_V, const MlpParams& mlp, const DropoutContext& drop = {});
// sigmoid(MLP([s_Q; s_V])); |answers| x 1.
Var score_cat_mlp(Var s_Q, Var s_V, const MlpParams& mlp, const DropoutContext& drop = {});

// Mean binary cross-entropy over the score vector, scores clamped to
// [1e-7, 1 - 1e-7]. Throws InputError for a target outside [0,1].
Var multilabel_loss(Var scores, const Tensor& targets);

struct ParamCount {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_module;
};

ParamCount count_params(std::span<const ParamSpec> specs);

}  // namespace dcn::predict
