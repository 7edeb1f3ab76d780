#include "focusmix/numerics/param_store.hpp"

namespace focusmix::numerics {

template <typename T>
void accumulate(GradMap<T>& dst, const GradMap<T>& src, T scale) {
  for (const auto& [name, g] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) {
      Tensor<T> copy = g;
      if (scale != T{1})
        for (auto& v : copy.values()) v *= scale;
      dst.emplace(name, std::move(copy));
      continue;
    }
    require_same_shape(it->second.shape(), g.shape(), ("gradient accumulate " + name).c_str());
    T* d = it->second.data();
    const T* s = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += scale * s[i];
  }
}

template <typename T>
void scale(GradMap<T>& grads, T factor) {
  for (auto& [name, g] : grads)
    for (auto& v : g.values()) v *= factor;
}

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Entry e;
  e.m = Tensor<T>(value.shape());
  e.v = Tensor<T>(value.shape());
  e.value = std::move(value);
  return entries_.emplace(name, std::move(e)).first->second.value;
}

template <typename T>
Tensor<T>& ParamStore<T>::add_uniform(const std::string& name, Shape shape, double a, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-a, a));
  return add(name, std::move(t));
}

template <typename T>
Tensor<T>& ParamStore<T>::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor<T>(std::move(shape)));
}

template <typename T>
const typename ParamStore<T>::Entry& ParamStore<T>::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw IndexError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
typename ParamStore<T>::Entry& ParamStore<T>::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw IndexError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  return entry(name).value;
}

template <typename T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
  return entry(name).value;
}

template <typename T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

template <typename T>
std::size_t ParamStore<T>::num_values() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

template class ParamStore<float>;
template class ParamStore<double>;
template void accumulate<float>(GradMap<float>&, const GradMap<float>&, float);
template void accumulate<double>(GradMap<double>&, const GradMap<double>&, double);
template void scale<float>(GradMap<float>&, float);
template void scale<double>(GradMap<double>&, double);

}  // namespace focusmix::numerics
