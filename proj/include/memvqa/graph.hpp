#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "memvqa/tensor.hpp"

namespace memvqa {

// Named learnable tensors with one gradient slot each. Each entry carries a
// group tag so the optimizer can apply per-group learning rates.
template <typename Real>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<Real> value, std::string group = "default") {
    if (entries_.count(name) != 0) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Tensor<Real> grad(value.shape());
    entries_.emplace(name, Entry{std::move(value), std::move(grad), std::move(group)});
    order_.push_back(name);
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor<Real>& value(const std::string& name) { return entry(name).value; }
  const Tensor<Real>& value(const std::string& name) const { return entry(name).value; }
  Tensor<Real>& grad(const std::string& name) { return entry(name).grad; }
  const Tensor<Real>& grad(const std::string& name) const { return entry(name).grad; }
  const std::string& group(const std::string& name) const { return entry(name).group; }

  // Insertion order; stable across save/load.
  const std::vector<std::string>& names() const { return order_; }

  void zero_grad() {
    for (auto& [name, e] : entries_) e.grad.fill(Real(0));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
  }

 private:
  struct Entry {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::string group;
  };

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

template <typename Real>
class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
template <typename Real>
class Var {
 public:
  Var() = default;
  Var(Graph<Real>* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph<Real>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor<Real>& value() const { return graph_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  Graph<Real>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape of primitive operations recorded in topological order. backward()
// walks the tape in reverse and accumulates into ParamStore gradient slots.
template <typename Real>
class Graph {
 public:
  // Accumulates the contribution of grad_out into the input gradients.
  // input_grads[i] is null when input i does not require a gradient.
  using BackwardFn = std::function<void(const Tensor<Real>& out_value, const Tensor<Real>& grad_out,
                                        std::span<const Tensor<Real>* const> input_values,
                                        std::span<Tensor<Real>* const> input_grads)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Real> constant(Tensor<Real> value) { return push(std::move(value), {}, nullptr, false, "constant"); }

  // Leaf that receives a gradient but is not bound to a ParamStore.
  Var<Real> variable(Tensor<Real> value) { return push(std::move(value), {}, nullptr, true, "variable"); }

  // One leaf per parameter name per graph; repeated lookups share the node.
  Var<Real> parameter(ParamStore<Real>& store, const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return Var<Real>(this, it->second);
    Var<Real> v = push(store.value(name), {}, nullptr, true, "parameter");
    nodes_[v.id()].store = &store;
    nodes_[v.id()].param_name = name;
    param_nodes_.emplace(name, v.id());
    return v;
  }

  Var<Real> record(const char* op, Tensor<Real> value, std::vector<Var<Real>> inputs, BackwardFn backward) {
    bool needs_grad = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) {
      if (&in.graph() != this) throw std::invalid_argument(std::string(op) + ": input from another graph");
      ids.push_back(in.id());
      needs_grad = needs_grad || nodes_[in.id()].requires_grad;
    }
    if (!value.all_finite()) {
      throw std::domain_error(std::string(op) + ": non-finite value in output");
    }
    return push(std::move(value), std::move(ids), needs_grad ? std::move(backward) : nullptr, needs_grad, op);
  }

  const Tensor<Real>& value(Var<Real> v) const { return nodes_.at(v.id()).value; }

  bool requires_grad(Var<Real> v) const { return nodes_.at(v.id()).requires_grad; }

  // Gradient of the last backward() target with respect to v (zeros if v was
  // not reached).
  Tensor<Real> grad(Var<Real> v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.empty()) return Tensor<Real>(n.value.shape());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var<Real> loss) {
    const Node& target = nodes_.at(loss.id());
    if (target.value.size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                  shape_string(target.value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor<Real>();
    nodes_[loss.id()].grad = Tensor<Real>(target.value.shape(), Real(1));

    std::vector<const Tensor<Real>*> in_values;
    std::vector<Tensor<Real>*> in_grads;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.requires_grad) continue;
      if (n.backward) {
        in_values.clear();
        in_grads.clear();
        for (std::size_t in : n.inputs) {
          Node& src = nodes_[in];
          in_values.push_back(&src.value);
          if (src.requires_grad) {
            if (src.grad.empty()) src.grad = Tensor<Real>(src.value.shape());
            in_grads.push_back(&src.grad);
          } else {
            in_grads.push_back(nullptr);
          }
        }
        n.backward(n.value, n.grad, in_values, in_grads);
      }
      if (n.store != nullptr) {
        Tensor<Real>& slot = n.store->grad(n.param_name);
        for (std::size_t k = 0; k < slot.size(); ++k) slot[k] += n.grad[k];
      }
    }
  }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const char* op = "";
    ParamStore<Real>* store = nullptr;
    std::string param_name;
  };

  Var<Real> push(Tensor<Real> value, std::vector<std::size_t> inputs, BackwardFn backward, bool requires_grad,
                 const char* op) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
    n.requires_grad = requires_grad;
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var<Real>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
};

}  // namespace memvqa
