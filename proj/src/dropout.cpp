#include "dcn/dropout.hpp"

#include <string>

#include "dcn/ops.hpp"

namespace dcn {

Var dropout(Var x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: rate must lie in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  Tensor mask(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const double kept = 1.0 / (1.0 - p);
  for (auto& m : mask.values()) m = keep(rng) ? kept : 0.0;
  return ops::mul(x, x.graph->constant(std::move(mask)));
}

}  // namespace dcn
