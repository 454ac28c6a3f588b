#include "ncdwf/rng.hpp"

#include <cmath>
#include <numbers>

#include "ncdwf/error.hpp"

namespace ncdwf {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

double Rng::uniform01() {
  return static_cast<double>(raw() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller, one value per call so no hidden cache state.
  const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw Error("Rng::gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost to shape+1 and scale back (Marsaglia-Tsang trick for shape < 1).
    const double u = 1.0 - uniform01();  // (0, 1]
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze method.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  const double ga = gamma(a);
  const double gb = gamma(b);
  const double s = ga + gb;
  if (s == 0.0) return 0.5;  // both draws underflowed; vanishing probability
  return ga / s;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw Error("Rng::index: n must be >= 1");
  const std::uint64_t un = n;
  const std::uint64_t reject_below = (-un) % un;  // 2^64 mod n
  std::uint64_t r;
  do {
    r = raw();
  } while (r < reject_below);
  return static_cast<std::size_t>(r % un);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  shuffle(p);
  return p;
}

Rng Rng::fork(std::uint64_t tag) const {
  return Rng(splitmix64(seed_ ^ splitmix64(tag)));
}

}  // namespace ncdwf
