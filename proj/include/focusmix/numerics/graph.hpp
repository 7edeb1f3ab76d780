#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>

#include "focusmix/numerics/param_store.hpp"
#include "focusmix/numerics/tensor.hpp"

namespace focusmix::numerics {

// Handle to a node on a Graph tape.
struct Var {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kNone;
  bool valid() const { return id != kNone; }
};

// Reverse-mode tape.
//
// Nodes are appended in evaluation order, so the tape is already a
// topological order and backward() is a single reverse sweep. Parameter
// leaves read the ParamStore in place; the store must outlive the graph and
// must not be modified while the graph is alive.
//
// With recording disabled the graph only evaluates values; no backward
// closures are stored. Decoding uses that mode.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, Var self)>;

  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor<T> value);
  // Cached per name: repeated lookups return the same leaf.
  Var param(const ParamStore<T>& store, const std::string& name);

  // For op implementations. `needs_grad` is normally "any input needs grad".
  Var push(Tensor<T> value, bool needs_grad, Backward backward);

  const Tensor<T>& value(Var v) const;
  bool needs_grad(Var v) const { return node(v).needs_grad; }
  // Gradient buffer of `v`, zero-initialised on first access.
  Tensor<T>& grad(Var v);
  bool has_grad(Var v) const { return node(v).grad_allocated; }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape. `loss` must be a single value.
  void backward(Var loss);

  // Sums parameter-leaf gradients (scaled) into `into`. Leaves never reached
  // by backward() are skipped.
  void accumulate_param_grads(GradMap<T>& into, T scale = T{1}) const;
  GradMap<T> param_grads() const;

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool grad_allocated = false;
    bool needs_grad = false;
    Backward backward;
    std::string param_name;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  bool recording_;
  std::deque<Node> nodes_;
  std::unordered_map<std::string, Var> param_cache_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace focusmix::numerics
