#include "dcn/predict.hpp"

#include "dcn/ops.hpp"

namespace dcn::predict {

std::vector<ParamSpec> mlp_specs(const std::string& prefix, std::size_t in, std::size_t hidden,
                                 std::size_t out, const std::string& module) {
  return {
      {prefix + ".W1", {hidden, in}, Init::Glorot, module},
      {prefix + ".b1", {hidden, 1}, Init::Zero, module},
      {prefix + ".W2", {out, hidden}, Init::Glorot, module},
      {prefix + ".b2", {out, 1}, Init::Zero, module},
  };
}

MlpParams bind_mlp(ParamStore& store, const std::string& prefix) {
  return {&store.get(prefix + ".W1"), &store.get(prefix + ".b1"), &store.get(prefix + ".W2"),
          &store.get(prefix + ".b2")};
}

Var mlp_forward(Var x, const MlpParams& p, const DropoutContext& drop) {
  Graph& g = *x.graph;
  if (p.W1->value.cols() != x.rows()) {
    throw DimensionError("mlp_forward: input " + shape_str(x.shape()) + " vs W1 " +
                         shape_str(p.W1->value.shape()));
  }
  const Var hidden = drop.fc(ops::relu(ops::add_bias(ops::matmul(g.param(*p.W1), x), g.param(*p.b1))));
  return ops::add_bias(ops::matmul(g.param(*p.W2), hidden), g.param(*p.b2));
}

Summary self_attend_summary(Var X, const MlpParams* mlp, const DropoutContext& drop) {
  const std::size_t m = X.cols();
  if (m == 0) throw InputError("self_attend_summary: no columns");
  Var alpha_row;  // 1 x M
  if (mlp != nullptr) {
    alpha_row = ops::softmax_rows(mlp_forward(X, *mlp, drop));
  } else {
    alpha_row = X.graph->constant(Tensor({1, m}, 1.0 / static_cast<double>(m)));
  }
  const Var alpha = ops::transpose(alpha_row);
  return {ops::matmul(X, alpha), alpha};
}

Var score_inner(Var s_Q, Var s_V, Var S_A, Var W) {
  // (S_A^T W (s_Q + s_V)), one entry per answer
  return ops::sigmoid(ops::matmul(ops::transpose(S_A), ops::matmul(W, ops::add(s_Q, s_V))));
}

Var score_sum_mlp(Var s_Q, Var s_V, const MlpParams& mlp, const DropoutContext& drop) {
  return ops::sigmoid(mlp_forward(ops::add(s_Q, s_V), mlp, drop));
}

Var score_cat_mlp(Var s_Q, Var s_V, const MlpParams& mlp, const DropoutContext& drop) {
  return ops::sigmoid(mlp_forward(ops::concat_rows({s_Q, s_V}), mlp, drop));
}

Var multilabel_loss(Var scores, const Tensor& targets) { return ops::bce_loss(scores, targets); }

ParamCount count_params(std::span<const ParamSpec> specs) {
  ParamCount c;
  for (const auto& s : specs) {
    const std::size_t n = shape_numel(s.shape);
    c.total += n;
    c.by_module[s.module] += n;
  }
  return c;
}

}  // namespace dcn::predict
