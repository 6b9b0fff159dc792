#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dcn/graph.hpp"

namespace dcn {

struct GradBlockReport {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradBlockReport> blocks;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

// Builds a fresh graph and returns a single-element loss node.
using LossBuilder = std::function<Var(Graph&)>;

// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
// Keeps roundoff in the central difference of near-zero gradients from
// reading as a large relative error.
inline constexpr double kGradCheckFloor = 1e-6;

// Compares the backward gradient of every entry of every parameter against
// the central difference (f(x+h) - f(x-h)) / 2h. Parameter values are
// perturbed in place and restored. Throws NumericalError if f is non-finite.
GradCheckReport grad_check(const LossBuilder& f, std::span<Parameter* const> params,
                           double step = 1e-5, double tol = 1e-4);

double relative_error(double analytic, double numeric);

}  // namespace dcn
