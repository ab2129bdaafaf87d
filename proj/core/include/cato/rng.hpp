#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cato {

/// Counter-based 64-bit generator: output k is splitmix64(seed + k * golden).
/// Streams derived with `fork` are independent of how many values the parent drew.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();
  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);
  double normal();                          // standard normal (Box-Muller)
  std::size_t below(std::size_t n);         // [0, n)
  CounterRng fork(std::uint64_t stream) const;

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cato
