#include "focusmix/numerics/adam.hpp"

#include <algorithm>
#include <cmath>

namespace focusmix::numerics {

template <typename T>
void adam_step(ParamStore<T>& store, const GradMap<T>& grads, const AdamConfig& cfg) {
  // Validate everything first so a bad map leaves the store untouched.
  for (const auto& [name, g] : grads) {
    require_same_shape(store.get(name).shape(), g.shape(), ("adam_step " + name).c_str());
  }
  for (const auto& [name, g] : grads) {
    // An all-zero gradient marks an untouched parameter, same as absence.
    if (std::all_of(g.values().begin(), g.values().end(), [](T x) { return x == T{0}; }))
      continue;
    auto& e = store.entry(name);
    e.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.step));
    T* p = e.value.data();
    T* m = e.m.data();
    T* v = e.v.data();
    const T* gr = g.data();
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * gr[i];
      v[i] = b2 * v[i] + (T{1} - b2) * gr[i] * gr[i];
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template void adam_step<float>(ParamStore<float>&, const GradMap<float>&, const AdamConfig&);
template void adam_step<double>(ParamStore<double>&, const GradMap<double>&, const AdamConfig&);

}  // namespace focusmix::numerics
