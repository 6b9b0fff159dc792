#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcn/graph.hpp"

// Differentiable op catalog. Every op checks shapes at the call site and
// throws DimensionError naming the offending shapes; there is no implicit
// broadcasting.
namespace dcn::ops {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// a[m x n] + b[m x 1] added to every column.
Var add_bias(Var a, Var b);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
// Row i becomes softmax(a[i,:] / divisor).
Var softmax_rows(Var a, double divisor = 1.0);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var reshape(Var a, Shape shape);

Var sum(Var a);
Var mean(Var a);
// Each column divided by max(||col||_2, 1e-12).
Var l2_normalize_cols(Var a);
// Non-overlapping max pool of a C x H x W map.
Var max_pool2d(Var a, std::size_t window);
// sum_j w[j] * xs[j]; w holds xs.size() entries.
Var weighted_sum(std::span<const Var> xs, Var w);
// Mean binary cross-entropy with scores clamped to [1e-7, 1 - 1e-7].
Var bce_loss(Var scores, const Tensor& targets);

inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

inline constexpr double kL2Floor = 1e-12;
inline constexpr double kProbClamp = 1e-7;

}  // namespace dcn::ops
