#include "dcn/params.hpp"

#include <cmath>

namespace dcn {

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  // splitmix64 folded over the parts
  std::uint64_t state = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) {
    state += p + 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    state = z ^ (z >> 31);
  }
  return state;
}

Parameter& ParamStore::add(std::string name, Tensor value) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter name " + name);
  by_name_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(value), params_.size()});
  return params_.back();
}

Parameter& ParamStore::add(const ParamSpec& spec, Rng& rng) {
  return add(spec.name, init_tensor(spec.shape, spec.init, rng));
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw InputError("unknown parameter " + name);
  return params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw InputError("unknown parameter " + name);
  return params_[it->second];
}

std::vector<Parameter*> ParamStore::pointers() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Tensor> ParamStore::zero_grads() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.value.shape());
  return out;
}

namespace {

// Gram-Schmidt on the rows of an n x n Gaussian matrix.
void orthogonal_block(double* block, std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n * n; ++i) block[i] = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = block + i * n;
    for (std::size_t k = 0; k < i; ++k) {
      const double* prev = block + k * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += row[j] * prev[j];
      for (std::size_t j = 0; j < n; ++j) row[j] -= dot * prev[j];
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < n; ++j) row[j] /= norm;
  }
}

}  // namespace

Tensor init_tensor(const Shape& shape, Init init, Rng& rng) {
  Tensor t(shape);
  switch (init) {
    case Init::Zero:
      break;
    case Init::One:
      t.fill(1.0);
      break;
    case Init::Glorot: {
      const double fan_out = static_cast<double>(t.rows());
      const double fan_in = static_cast<double>(t.cols());
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-a, a);
      for (auto& v : t.values()) v = u(rng);
      break;
    }
    case Init::Orthogonal: {
      const std::size_t n = t.cols();
      if (t.rows() % n != 0) throw DimensionError("orthogonal init needs stacked square blocks, got " + shape_str(shape));
      for (std::size_t b = 0; b < t.rows() / n; ++b) orthogonal_block(t.data() + b * n * n, n, rng);
      break;
    }
    case Init::ForgetBias: {
      // gate order is [input; forget; output; candidate]
      const std::size_t hidden = t.size() / 4;
      for (std::size_t i = hidden; i < 2 * hidden; ++i) t[i] = 1.0;
      break;
    }
  }
  return t;
}

}  // namespace dcn
