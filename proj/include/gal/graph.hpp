#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gal/tensor.hpp"

namespace gal {

template <typename Scalar>
class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
class Var {
 public:
  using Vector = VectorX<Scalar>;

  Var() = default;
  Var(Graph<Scalar>* graph, int id) : graph_(graph), id_(id) {}

  Graph<Scalar>& graph() const { return *graph_; }
  int id() const { return id_; }
  const Vector& value() const { return graph_->value(id_); }
  const Shape& shape() const { return graph_->shape(id_); }
  Index size() const { return value().size(); }
  Index dim(Index axis) const { return shape().at(static_cast<std::size_t>(axis)); }
  Tensor<Scalar> tensor() const { return Tensor<Scalar>(shape(), value()); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<Scalar>* graph_ = nullptr;
  int id_ = -1;
};

/// Append-only tape for reverse-mode differentiation. Node ids are assigned in
/// recording order, so every node's inputs precede it and a single reverse
/// sweep visits each node once.
template <typename Scalar>
class Graph {
 public:
  using Vector = VectorX<Scalar>;
  /// Receives the graph and the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Graph&, const Vector&)>;

  struct Node {
    std::string_view op;
    Shape shape;
    Vector value;
    std::vector<int> inputs;
    BackwardFn backward;
    Tensor<Scalar>* leaf = nullptr;
    bool needs_grad = false;
  };

  /// With `record_gradients` false the graph is forward-only: leaves are
  /// copied as constants and never written back to.
  explicit Graph(bool record_gradients = true) : record_gradients_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Records `t` by reference; backward accumulates into `t.grad` when
  /// `t.requires_grad` is set. `t` must outlive the backward call.
  Var<Scalar> leaf(Tensor<Scalar>& t) {
    Node n;
    n.op = "leaf";
    n.shape = t.shape;
    n.value = t.data;
    if (record_gradients_ && t.requires_grad) {
      n.leaf = &t;
      n.needs_grad = true;
    }
    return push(std::move(n));
  }

  Var<Scalar> constant(Shape shape, Vector value) {
    if (value.size() != numel(shape)) {
      throw DimensionError("constant data length does not match shape " + to_string(shape));
    }
    Node n;
    n.op = "constant";
    n.shape = std::move(shape);
    n.value = std::move(value);
    return push(std::move(n));
  }

  Var<Scalar> constant(const Tensor<Scalar>& t) { return constant(t.shape, t.data); }

  /// Records an op result. `backward` is dropped when no input needs a gradient.
  Var<Scalar> record(std::string_view op, Shape shape, Vector value, std::vector<int> inputs,
                     BackwardFn backward) {
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.value = std::move(value);
    for (int in : inputs) n.needs_grad = n.needs_grad || nodes_.at(static_cast<std::size_t>(in)).needs_grad;
    n.inputs = std::move(inputs);
    if (n.needs_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse.
  void backward(Var<Scalar> loss) {
    if (&loss.graph() != this) throw ContractError("backward: loss belongs to a different graph");
    if (loss.size() != 1) {
      throw ContractError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
    }
    grads_.assign(nodes_.size(), Vector());
    grads_[static_cast<std::size_t>(loss.id())] = Vector::Ones(1);
    for (int id = loss.id(); id >= 0; --id) {
      auto& node = nodes_[static_cast<std::size_t>(id)];
      auto& g = grads_[static_cast<std::size_t>(id)];
      if (!node.needs_grad || g.size() == 0) continue;
      if (node.leaf != nullptr) {
        if (node.leaf->grad) {
          *node.leaf->grad += g;
        } else {
          node.leaf->grad = g;
        }
      } else if (node.backward) {
        node.backward(*this, g);
      }
      g.resize(0);
    }
    grads_.clear();
  }

  bool needs_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).needs_grad; }

  /// Gradient accumulator for node `id`; only valid inside a backward sweep.
  Vector& grad(int id) {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() == 0) g = Vector::Zero(nodes_[static_cast<std::size_t>(id)].value.size());
    return g;
  }

  const Vector& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Shape& shape(int id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  bool records_gradients() const { return record_gradients_; }

 private:
  Var<Scalar> push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::vector<Node> nodes_;
  std::vector<Vector> grads_;
  bool record_gradients_ = true;
};

}  // namespace gal
