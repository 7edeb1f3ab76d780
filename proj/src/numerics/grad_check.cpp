#include "focusmix/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace focusmix::numerics {

GradCheckResult grad_check(const LossFn& loss, ParamStore<double>& store, double eps) {
  GradMap<double> analytic;
  const double base = loss(store, &analytic);
  if (!std::isfinite(base)) throw NonFiniteLoss("loss is not finite at the unperturbed point");

  GradCheckResult result;
  for (const std::string& name : store.names()) {
    Tensor<double>& p = store.get(name);
    const auto it = analytic.find(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = loss(store, nullptr);
      p[i] = saved - eps;
      const double down = loss(store, nullptr);
      p[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NonFiniteLoss("non-finite loss when perturbing " + name + "[" + std::to_string(i) + "]");
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++result.entries_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

void randomize_params(ParamStore<double>& store, double a, Rng& rng) {
  for (auto& [name, e] : store)
    for (auto& x : e.value.values()) x = rng.uniform(-a, a);
}

}  // namespace focusmix::numerics
