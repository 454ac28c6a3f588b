#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace ncdwf {

// Deterministic random source. mt19937_64 raw output is pinned by the
// standard, and every distribution here is hand-rolled on top of it, so a
// seed reproduces the exact same stream on any platform or stdlib.
// std::normal_distribution and friends make no such promise.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t raw() { return eng_(); }
  std::uint64_t seed() const { return seed_; }

  double uniform01();                            // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);                    // unit scale, shape > 0
  double beta(double a, double b);               // in [0, 1]
  std::size_t index(std::size_t n);              // uniform over [0, n), n >= 1

  std::vector<std::size_t> permutation(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  // Independent child stream; same (seed, tag) always forks the same child.
  Rng fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace ncdwf
