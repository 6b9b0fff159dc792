#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcn/tensor.hpp"

namespace dcn {

// Learnable tensor. `index` is its slot in the owning ParamStore.
struct Parameter {
  std::string name;
  Tensor value;
  std::size_t index = 0;
};

class Graph;

// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
// is always topologically sorted.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Var constant(Tensor value);
  // Reuses the leaf if the parameter is already on the tape.
  Var param(const Parameter& p);
  Var custom(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Gradient of node `id`, allocated as zeros on first access.
  Tensor& grad_ref(int id);
  // Empty tensor if no gradient reached the node.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  // Seeds d(loss)/d(loss) = 1; the loss must hold a single element.
  void backward(Var loss);

  // Adds each parameter leaf's gradient into grads[param.index].
  void accumulate_param_grads(std::vector<Tensor>& grads) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace dcn
