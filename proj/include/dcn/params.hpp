#pragma once

#include <cstdint>
#include <deque>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dcn/graph.hpp"

namespace dcn {

enum class Init {
  Zero,
  One,
  Glorot,       // uniform(-a, a), a = sqrt(6 / (fan_in + fan_out))
  Orthogonal,   // square blocks stacked row-wise, each orthogonal
  ForgetBias,   // LSTM bias: 1 on the forget-gate block, 0 elsewhere
};

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init = Init::Glorot;
  // Component used for the per-module parameter breakdown.
  std::string module;
};

using Rng = std::mt19937_64;

// Deterministic seed for a sub-stream, e.g. derive_seed({seed, epoch, index}).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

// Owns all learnable tensors. Addresses are stable for the store's lifetime,
// so graphs and parameter structs may hold Parameter pointers.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter& add(std::string name, Tensor value);
  Parameter& add(const ParamSpec& spec, Rng& rng);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::vector<Parameter*> pointers();
  std::size_t scalar_count() const;

  // Zero tensors shaped like each parameter, in store order.
  std::vector<Tensor> zero_grads() const;

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> by_name_;
};

Tensor init_tensor(const Shape& shape, Init init, Rng& rng);

}  // namespace dcn
