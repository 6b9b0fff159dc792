#pragma once

#include <functional>
#include <random>
#include <vector>

#include "dcn/gradcheck.hpp"
#include "dcn/ops.hpp"
#include "dcn/params.hpp"
#include "dcn/tensor.hpp"

namespace dcn::testutil {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = n(rng);
  return t;
}

// Reduces a non-scalar output to a scalar with a fixed random weighting so
// every output entry contributes a distinct gradient.
inline Var weighted_total(Var y, std::uint64_t seed = 99) {
  Graph& g = *y.graph;
  const Var w = g.constant(random_tensor(y.shape(), seed));
  return ops::sum(ops::mul(y, w));
}

// Grad-checks f(params) where f builds an arbitrary-shaped output.
inline GradCheckReport check_op(ParamStore& store, const std::function<Var(Graph&)>& f, double tol = 1e-6) {
  const auto ptrs = store.pointers();
  return grad_check([&](Graph& g) { return weighted_total(f(g)); }, ptrs, 1e-5, tol);
}

}  // namespace dcn::testutil
