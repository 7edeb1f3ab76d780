#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace focusmix::numerics {

// Portable pseudo-random stream.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The std distributions are not, so every draw is derived from raw
// 64-bit words here:
//   uniform()  = (word >> 11) * 2^-53                  in [0, 1)
//   index(n)   = rejection sampling on word % n, rejecting the top partial block
// This makes seeded runs bit-identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for (seed, stream) pairs via splitmix64 mixing.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n);

  template <typename V>
  void shuffle(std::vector<V>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace focusmix::numerics
