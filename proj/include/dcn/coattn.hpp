#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dcn/config.hpp"
#include "dcn/graph.hpp"
#include "dcn/params.hpp"

namespace dcn::coattn {

// Parameters of one dense co-attention layer. The h head projections of each
// modality are stacked row-wise: rows [i*d_h, (i+1)*d_h) belong to head i.
struct CoAttnLayerParams {
  const Parameter* W_img_heads = nullptr;  // d x d
  const Parameter* W_q_heads = nullptr;    // d x d
  const Parameter* M_Q = nullptr;          // d x K, absent when K = 0
  const Parameter* M_V = nullptr;          // d x K, absent when K = 0
  const Parameter* W_Q = nullptr;          // d x 2d
  const Parameter* b_Q = nullptr;          // d x 1
  const Parameter* W_V = nullptr;          // d x 2d
  const Parameter* b_V = nullptr;          // d x 1
  std::size_t heads = 1;
};

std::vector<ParamSpec> layer_specs(std::size_t l, std::size_t d, std::size_t K);
CoAttnLayerParams bind_layer(ParamStore& store, std::size_t l, std::size_t heads);
std::string layer_prefix(std::size_t l);

// Averaged row-stochastic maps: A_Q is (T+K) x (N+K), A_V is (N+K) x (T+K).
struct AttentionMaps {
  Var A_Q;
  Var A_V;
};

// [X | Mem] column-wise. A null memory (K = 0) returns X.
Var augment_with_memory(Var X, const Var* memory);

// (W_img V~)^T (W_q Q~) for one head's d_h x d projections.
Var head_affinity(Var V_aug, Var Q_aug, Var W_img, Var W_q);

// Mean over heads of softmax_rows(A_i / sqrt(d_h)) and of its transpose.
AttentionMaps attention_maps(std::span<const Var> affinities, std::size_t d_head);

// Row-constant map with every entry 1 / cols.
Var uniform_map(Graph& g, std::size_t rows, std::size_t cols);

// Q~ (A_Q[0:T, :])^T, d x T. The trailing memory rows of A_Q are discarded.
Var attend_question(Var Q_aug, Var A_Q, std::size_t T);
// V~ (A_V[0:N, :])^T, d x N.
Var attend_image(Var V_aug, Var A_V, std::size_t N);

// Column m = ReLU(W [x_m; a_m] + b) + x_m.
Var fuse(Var side_input, Var attended, Var W, Var b);

struct LayerOutput {
  Var Q;  // d x N
  Var V;  // d x T
  AttentionMaps maps;  // maps actually applied (uniform on a disabled path)
};

LayerOutput dense_coattn_layer(Var Q, Var V, const CoAttnLayerParams& p, DirectionMode mode);

// Applies the layers in order; element l of the result is the output of
// layer l. Throws ConfigError for an empty stack.
std::vector<LayerOutput> dcn_stack(Var Q0, Var V0, std::span<const CoAttnLayerParams> layers,
                                   DirectionMode mode);

}  // namespace dcn::coattn
