#pragma once

#include "dcn/graph.hpp"
#include "dcn/params.hpp"

namespace dcn {

// Inverted dropout: kept entries are scaled by 1 / (1 - p) while training;
// identity at evaluation. Throws ConfigError unless 0 <= p < 1.
Var dropout(Var x, double p, Rng& rng, bool training);

// Per-forward dropout settings. A null rng disables dropout.
struct DropoutContext {
  Rng* rng = nullptr;
  double p_fc = 0.0;
  double p_lstm = 0.0;

  bool active() const { return rng != nullptr; }
  Var fc(Var x) const { return active() ? dropout(x, p_fc, *rng, true) : x; }
  Var lstm(Var x) const { return active() ? dropout(x, p_lstm, *rng, true) : x; }
};

}  // namespace dcn
