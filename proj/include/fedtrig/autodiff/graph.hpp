#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedtrig/autodiff/tensor.hpp"

namespace fedtrig::ad {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

// Per-node gradient storage used while walking the tape backwards.
class GradBuffers {
 public:
  explicit GradBuffers(std::size_t nodes) : buffers_(nodes) {}

  // Zero-initialized on first access.
  std::span<double> at(std::size_t id, std::size_t size) {
    auto& buffer = buffers_[id];
    if (buffer.empty()) buffer.assign(size, 0.0);
    return buffer;
  }

  bool has(std::size_t id) const { return !buffers_[id].empty(); }
  std::vector<double>& raw(std::size_t id) { return buffers_[id]; }

 private:
  std::vector<std::vector<double>> buffers_;
};

// Receives the gradient of the node output and accumulates into the
// gradients of its inputs that require one.
using BackwardFn =
    std::function<void(const Graph&, std::span<const double>, GradBuffers&)>;

struct Node {
  Tensor value;
  std::vector<std::size_t> inputs;
  bool requires_grad = false;
  bool is_leaf = false;
  const char* op = "leaf";
  BackwardFn backward;
};

// Gradients of a scalar root with respect to every requires_grad leaf.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<std::size_t> leaf_ids, std::vector<Tensor> grads)
      : ids_(std::move(leaf_ids)), grads_(std::move(grads)) {}

  const Tensor& of(Var leaf) const { return of(leaf.id); }

  const Tensor& of(std::size_t leaf_id) const {
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (ids_[i] == leaf_id) return grads_[i];
    }
    throw ArgumentError("Gradients: node " + std::to_string(leaf_id) +
                        " is not a trainable leaf");
  }

  std::size_t size() const { return ids_.size(); }

 private:
  std::vector<std::size_t> ids_;
  std::vector<Tensor> grads_;
};

// Append-only tape of primitive operations. Node ids are assigned in
// creation order, so inputs always precede the nodes that consume them.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad) {
    value.set_requires_grad(requires_grad);
    Node node;
    node.requires_grad = requires_grad;
    node.is_leaf = true;
    node.value = std::move(value);
    return push(std::move(node));
  }

  Var parameter(Tensor value) { return leaf(std::move(value), true); }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records a derived node. `backward` is dropped when no input needs a
  // gradient.
  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs,
             BackwardFn backward) {
    value.check_finite(op);
    Node node;
    node.op = op;
    node.value = std::move(value);
    for (std::size_t in : inputs) {
      if (in >= nodes_.size()) throw ArgumentError("record: dangling input");
      node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
    }
    node.inputs = std::move(inputs);
    if (node.requires_grad) node.backward = std::move(backward);
    node.value.set_requires_grad(node.requires_grad);
    return push(std::move(node));
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar root. Every requires_grad leaf receives a
  // gradient (zeros when the root does not depend on it).
  Gradients backward(Var root) const {
    if (root.graph != this) throw ArgumentError("backward: foreign root");
    const Tensor& root_value = nodes_[root.id].value;
    if (root_value.size() != 1) {
      throw ShapeError("backward: root must be scalar, got shape " +
                       to_string(root_value.shape()));
    }
    GradBuffers grads(nodes_.size());
    if (nodes_[root.id].requires_grad) grads.at(root.id, 1)[0] = 1.0;

    for (std::size_t id = root.id + 1; id-- > 0;) {
      const Node& node = nodes_[id];
      if (!node.requires_grad || node.is_leaf || !grads.has(id)) continue;
      std::vector<double> upstream = std::move(grads.raw(id));
      node.backward(*this, upstream, grads);
    }

    std::vector<std::size_t> leaf_ids;
    std::vector<Tensor> leaf_grads;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const Node& node = nodes_[id];
      if (!node.is_leaf || !node.requires_grad) continue;
      std::vector<double> g = grads.has(id)
                                  ? std::move(grads.raw(id))
                                  : std::vector<double>(node.value.size(), 0.0);
      Tensor grad(node.value.shape(), std::move(g));  // throws on NaN/Inf
      leaf_ids.push_back(id);
      leaf_grads.push_back(std::move(grad));
    }
    return Gradients(std::move(leaf_ids), std::move(leaf_grads));
  }

 private:
  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }
inline bool Var::requires_grad() const { return graph->requires_grad(id); }

}  // namespace fedtrig::ad
