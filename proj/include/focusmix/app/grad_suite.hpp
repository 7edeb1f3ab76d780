#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace focusmix::app {

struct GradCheckLine {
  std::string name;
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]"
  std::size_t entries = 0;
};

inline constexpr double kGradTolerance = 1e-4;

// Central finite differences (64-bit, eps 1e-5) for every op group and for
// the selector, generator and mixture-decoder losses, each at a random point
// drawn from `seed`. With `corrupt` the first analytic gradient entry of every
// check is perturbed (negative control).
std::vector<GradCheckLine> run_grad_suite(std::uint64_t seed, bool corrupt = false);

}  // namespace focusmix::app
