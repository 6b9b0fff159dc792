#include "dcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dcn {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& f) {
  Graph g;
  const Var loss = f(g);
  const double v = loss.value()[0];
  if (!std::isfinite(v)) throw NumericalError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& f, std::span<Parameter* const> params, double step,
                           double tol) {
  if (step < 1e-6 || step > 1e-4) throw ConfigError("grad_check: step must lie in [1e-6, 1e-4]");

  std::vector<Tensor> analytic(params.size());
  {
    Graph g;
    const Var loss = f(g);
    if (!loss.value().all_finite()) throw NumericalError("grad_check: loss is not finite");
    g.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      analytic[i] = Tensor(params[i]->value.shape());
      const Var leaf = g.param(*params[i]);
      if (!g.grad(leaf).empty()) analytic[i] = g.grad(leaf);
    }
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    GradBlockReport block{p.name, p.value.size(), 0.0};
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + step;
      const double plus = evaluate(f);
      p.value[k] = saved - step;
      const double minus = evaluate(f);
      p.value[k] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      block.max_rel_error = std::max(block.max_rel_error, relative_error(analytic[i][k], numeric));
    }
    report.entries_checked += block.entries;
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(std::move(block));
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace dcn
