#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "scenesketch/core/tensor.hpp"

namespace scenesketch {

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered collection of parameters. Addresses stay stable as parameters are
/// added, so graphs may hold references while a model is being built.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    index_[name] = params_.size();
    Tensor grad(init.rows(), init.cols());
    params_.push_back(Parameter{name, std::move(init), std::move(grad)});
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
    return params_[it->second];
  }
  const Parameter& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
    return params_[it->second];
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Tape of primitive applications with reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, which is a topological order;
/// backward() walks the tape exactly in reverse. A node only records a
/// gradient rule when one of its inputs requires a gradient.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t) { return push(std::move(t), false, nullptr); }

  Var variable(Tensor t) { return push(std::move(t), true, nullptr); }

  /// Leaf bound to a parameter. The same parameter always maps to one node,
  /// and backward() adds the node's gradient into Parameter::grad.
  Var param(Parameter& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return Var(this, it->second);
    Var v = push(p.value, true, nullptr);
    nodes_[v.id()].param = &p;
    bound_[&p] = v.id();
    return v;
  }

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& value_by_id(std::uint32_t id) const { return nodes_.at(id).value; }

  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient of the last backward() loss w.r.t. v; zeros if v was unreachable.
  const Tensor& grad(Var v) const {
    const Node& n = node(v);
    if (!n.has_grad) {
      static const Tensor kEmpty;
      if (!backward_done_) throw std::logic_error("Graph::grad: backward() has not run");
      return kEmpty;
    }
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss) {
    check_owned(loss, "backward");
    const Tensor& lv = node(loss).value;
    if (lv.size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " + lv.shape_string());
    }
    if (backward_done_) throw std::logic_error("backward: graph already differentiated");
    backward_done_ = true;
    for (Node& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor();
    }
    grad_ref(loss.id())[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (!n.requires_grad) continue;
      if (!n.has_grad) grad_ref(static_cast<std::uint32_t>(i));
      if (n.param) {
        auto& dst = n.param->grad.storage();
        const auto& src = n.grad.storage();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  // Used by gradient rules.
  Tensor& grad_ref(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }
  Tensor& grad_ref(Var v) { return grad_ref(v.id()); }

  Var push(Tensor value, bool requires_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  void check_owned(Var v, const char* op) const {
    if (v.graph() != this) {
      throw std::invalid_argument(std::string(op) + ": operand belongs to a different graph");
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  const Node& node(Var v) const {
    if (v.graph() != this || v.id() >= nodes_.size()) {
      throw std::invalid_argument("Graph: variable does not belong to this graph");
    }
    return nodes_[v.id()];
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> bound_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const {
  if (!graph_) throw std::logic_error("Var: empty handle");
  return graph_->value(*this);
}

}  // namespace scenesketch
