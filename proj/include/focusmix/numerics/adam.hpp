#pragma once

#include "focusmix/numerics/param_store.hpp"

namespace focusmix::numerics {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update of every parameter present in `grads`.
// Parameters absent from `grads`, or whose gradient is entirely zero, keep
// value, moments and step counter.
template <typename T>
void adam_step(ParamStore<T>& store, const GradMap<T>& grads, const AdamConfig& cfg = {});

}  // namespace focusmix::numerics
