#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "focusmix/numerics/rng.hpp"
#include "focusmix/numerics/tensor.hpp"

namespace focusmix::numerics {

// One gradient per touched parameter, keyed by parameter name.
template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

// Adds `scale * src` into `dst`, creating entries as needed.
template <typename T>
void accumulate(GradMap<T>& dst, const GradMap<T>& src, T scale = T{1});
template <typename T>
void scale(GradMap<T>& grads, T factor);

// Named parameters with their Adam moments.
//
// Iteration order is the std::map order of names. Each parameter carries its
// own step counter so that parameters skipped by an update keep t, m and v.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    Tensor<T> m;
    Tensor<T> v;
    std::uint64_t step = 0;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value);
  // Uniform in [-a, a].
  Tensor<T>& add_uniform(const std::string& name, Shape shape, double a, Rng& rng);
  Tensor<T>& add_zeros(const std::string& name, Shape shape);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t num_values() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  // Values only; moments start fresh in the target precision.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>());
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace focusmix::numerics
