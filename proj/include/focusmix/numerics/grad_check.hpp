#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "focusmix/numerics/param_store.hpp"

namespace focusmix::numerics {

// Loss over a parameter store. When `grads` is non-null the function also
// fills the analytic gradient.
using LossFn = std::function<double(const ParamStore<double>&, GradMap<double>* grads)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Central differences (f(p + eps) - f(p - eps)) / (2 eps) against the
// analytic gradient for every entry of every parameter, in 64-bit.
// Relative error per entry is |a - n| / max(1e-8, |a| + |n|).
// Throws NonFiniteLoss naming the entry when a perturbed loss is not finite.
GradCheckResult grad_check(const LossFn& loss, ParamStore<double>& store, double eps = 1e-5);

// Overwrites every parameter with uniform values in [-a, a]. Freshly
// initialised models have tiny gradients in places (attention behind small
// embeddings), which sit below the finite-difference noise floor.
void randomize_params(ParamStore<double>& store, double a, Rng& rng);

}  // namespace focusmix::numerics
