#include "focusmix/numerics/graph.hpp"

namespace focusmix::numerics {

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw IndexError("invalid graph variable");
  return nodes_[v.id];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw IndexError("invalid graph variable");
  return nodes_[v.id];
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::param(const ParamStore<T>& store, const std::string& name) {
  if (auto it = param_cache_.find(name); it != param_cache_.end()) return it->second;
  Node n;
  n.external = &store.get(name);
  n.needs_grad = recording_;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
  param_cache_.emplace(name, v);
  return v;
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool needs_grad, Backward backward) {
  Node n;
  n.own = std::move(value);
  n.needs_grad = recording_ && needs_grad;
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.own;
}

template <typename T>
Tensor<T>& Graph<T>::grad(Var v) {
  Node& n = node(v);
  if (!n.grad_allocated) {
    n.grad = Tensor<T>(value(v).shape());
    n.grad_allocated = true;
  }
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (!recording_) throw ConfigError("backward() on a graph built without recording");
  if (value(loss).size() != 1) {
    throw DimensionError("backward() needs a single-value loss, got shape " +
                         shape_string(value(loss).shape()));
  }
  grad(loss)[0] += T{1};
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad_allocated && n.backward) n.backward(*this, Var{id});
  }
}

template <typename T>
void Graph<T>::accumulate_param_grads(GradMap<T>& into, T scale) const {
  for (const auto& [name, v] : param_cache_) {
    const Node& n = nodes_[v.id];
    if (!n.grad_allocated) continue;
    auto it = into.find(name);
    if (it == into.end()) {
      Tensor<T> copy = n.grad;
      if (scale != T{1})
        for (auto& x : copy.values()) x *= scale;
      into.emplace(name, std::move(copy));
      continue;
    }
    require_same_shape(it->second.shape(), n.grad.shape(), name.c_str());
    T* d = it->second.data();
    const T* s = n.grad.data();
    for (std::size_t i = 0; i < n.grad.size(); ++i) d[i] += scale * s[i];
  }
}

template <typename T>
GradMap<T> Graph<T>::param_grads() const {
  GradMap<T> out;
  accumulate_param_grads(out);
  return out;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace focusmix::numerics
