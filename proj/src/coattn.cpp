#include "dcn/coattn.hpp"

#include <cmath>

#include "dcn/ops.hpp"

namespace dcn::coattn {

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

std::vector<ParamSpec> layer_specs(std::size_t l, std::size_t d, std::size_t K) {
  const std::string p = layer_prefix(l) + ".";
  std::vector<ParamSpec> specs{
      {p + "W_img_heads", {d, d}, Init::Glorot, "coattn"},
      {p + "W_q_heads", {d, d}, Init::Glorot, "coattn"},
  };
  if (K > 0) {
    specs.push_back({p + "M_Q", {d, K}, Init::Glorot, "coattn"});
    specs.push_back({p + "M_V", {d, K}, Init::Glorot, "coattn"});
  }
  specs.push_back({p + "W_Q", {d, 2 * d}, Init::Glorot, "coattn"});
  specs.push_back({p + "b_Q", {d, 1}, Init::Zero, "coattn"});
  specs.push_back({p + "W_V", {d, 2 * d}, Init::Glorot, "coattn"});
  specs.push_back({p + "b_V", {d, 1}, Init::Zero, "coattn"});
  return specs;
}

CoAttnLayerParams bind_layer(ParamStore& store, std::size_t l, std::size_t heads) {
  const std::string p = layer_prefix(l) + ".";
  CoAttnLayerParams out;
  out.W_img_heads = &store.get(p + "W_img_heads");
  out.W_q_heads = &store.get(p + "W_q_heads");
  if (store.contains(p + "M_Q")) {
    out.M_Q = &store.get(p + "M_Q");
    out.M_V = &store.get(p + "M_V");
  }
  out.W_Q = &store.get(p + "W_Q");
  out.b_Q = &store.get(p + "b_Q");
  out.W_V = &store.get(p + "W_V");
  out.b_V = &store.get(p + "b_V");
  out.heads = heads;
  const std::size_t d = out.W_Q->value.rows();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("invalid config field 'h': d = " + std::to_string(d) + " not divisible by h = " +
                      std::to_string(heads));
  }
  return out;
}

Var augment_with_memory(Var X, const Var* memory) {
  if (memory == nullptr) return X;
  if (memory->rows() != X.rows()) {
    throw DimensionError("augment_with_memory: features " + shape_str(X.shape()) + " vs memory " +
                         shape_str(memory->shape()));
  }
  return ops::concat_cols({X, *memory});
}

Var head_affinity(Var V_aug, Var Q_aug, Var W_img, Var W_q) {
  return ops::matmul(ops::transpose(ops::matmul(W_img, V_aug)), ops::matmul(W_q, Q_aug));
}

AttentionMaps attention_maps(std::span<const Var> affinities, std::size_t d_head) {
  if (affinities.empty()) throw DimensionError("attention_maps: empty head list");
  const double divisor = std::sqrt(static_cast<double>(d_head));
  Var sum_q, sum_v;
  for (std::size_t i = 0; i < affinities.size(); ++i) {
    if (affinities[i].shape() != affinities[0].shape()) {
      throw DimensionError("attention_maps: head shapes differ " + shape_str(affinities[0].shape()) +
                           " vs " + shape_str(affinities[i].shape()));
    }
    const Var aq = ops::softmax_rows(affinities[i], divisor);
    const Var av = ops::softmax_rows(ops::transpose(affinities[i]), divisor);
    sum_q = i == 0 ? aq : ops::add(sum_q, aq);
    sum_v = i == 0 ? av : ops::add(sum_v, av);
  }
  if (affinities.size() == 1) return {sum_q, sum_v};
  const double inv = 1.0 / static_cast<double>(affinities.size());
  return {ops::scale(sum_q, inv), ops::scale(sum_v, inv)};
}

Var uniform_map(Graph& g, std::size_t rows, std::size_t cols) {
  return g.constant(Tensor({rows, cols}, 1.0 / static_cast<double>(cols)));
}

Var attend_question(Var Q_aug, Var A_Q, std::size_t T) {
  if (A_Q.cols() != Q_aug.cols() || A_Q.rows() < T) {
    throw DimensionError("attend_question: Q~ " + shape_str(Q_aug.shape()) + " vs A_Q " +
                         shape_str(A_Q.shape()));
  }
  return ops::matmul(Q_aug, ops::transpose(ops::slice_rows(A_Q, 0, T)));
}

Var attend_image(Var V_aug, Var A_V, std::size_t N) {
  if (A_V.cols() != V_aug.cols() || A_V.rows() < N) {
    throw DimensionError("attend_image: V~ " + shape_str(V_aug.shape()) + " vs A_V " +
                         shape_str(A_V.shape()));
  }
  return ops::matmul(V_aug, ops::transpose(ops::slice_rows(A_V, 0, N)));
}

Var fuse(Var side_input, Var attended, Var W, Var b) {
  if (side_input.shape() != attended.shape()) {
    throw DimensionError("fuse: side input " + shape_str(side_input.shape()) + " vs attended " +
                         shape_str(attended.shape()));
  }
  const Var joint = ops::concat_rows({side_input, attended});
  return ops::add(ops::relu(ops::add_bias(ops::matmul(W, joint), b)), side_input);
}

LayerOutput dense_coattn_layer(Var Q, Var V, const CoAttnLayerParams& p, DirectionMode mode) {
  Graph& g = *Q.graph;
  const std::size_t d = Q.rows();
  if (V.rows() != d || p.W_Q->value.rows() != d) {
    throw DimensionError("dense_coattn_layer: Q " + shape_str(Q.shape()) + ", V " + shape_str(V.shape()) +
                         ", W_Q " + shape_str(p.W_Q->value.shape()));
  }
  const std::size_t N = Q.cols();
  const std::size_t T = V.cols();
  const std::size_t d_head = d / p.heads;

  Var mem_q, mem_v;
  if (p.M_Q != nullptr) {
    mem_q = g.param(*p.M_Q);
    mem_v = g.param(*p.M_V);
  }
  const Var Q_aug = augment_with_memory(Q, p.M_Q ? &mem_q : nullptr);
  const Var V_aug = augment_with_memory(V, p.M_V ? &mem_v : nullptr);

  // all heads projected at once, then split by row blocks
  const Var proj_v = ops::matmul(g.param(*p.W_img_heads), V_aug);
  const Var proj_q = ops::matmul(g.param(*p.W_q_heads), Q_aug);
  std::vector<Var> affinities;
  affinities.reserve(p.heads);
  for (std::size_t i = 0; i < p.heads; ++i) {
    affinities.push_back(ops::matmul(ops::transpose(ops::slice_rows(proj_v, i * d_head, d_head)),
                                     ops::slice_rows(proj_q, i * d_head, d_head)));
  }
  AttentionMaps maps = attention_maps(affinities, d_head);
  if (mode == DirectionMode::QuestionGuided) maps.A_Q = uniform_map(g, maps.A_Q.rows(), maps.A_Q.cols());
  if (mode == DirectionMode::ImageGuided) maps.A_V = uniform_map(g, maps.A_V.rows(), maps.A_V.cols());

  const Var Q_hat = attend_question(Q_aug, maps.A_Q, T);  // d x T
  const Var V_hat = attend_image(V_aug, maps.A_V, N);     // d x N

  LayerOutput out;
  out.Q = fuse(Q, V_hat, g.param(*p.W_Q), g.param(*p.b_Q));
  out.V = fuse(V, Q_hat, g.param(*p.W_V), g.param(*p.b_V));
  out.maps = maps;
  return out;
}

std::vector<LayerOutput> dcn_stack(Var Q0, Var V0, std::span<const CoAttnLayerParams> layers,
                                   DirectionMode mode) {
  if (layers.empty()) throw ConfigError("invalid config field 'L': stack depth must be at least 1");
  std::vector<LayerOutput> outs;
  outs.reserve(layers.size());
  Var Q = Q0, V = V0;
  for (const auto& layer : layers) {
    outs.push_back(dense_coattn_layer(Q, V, layer, mode));
    Q = outs.back().Q;
    V = outs.back().V;
  }
  return outs;
}

}  // namespace dcn::coattn
