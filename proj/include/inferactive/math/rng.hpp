#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

#include "inferactive/math/normal.hpp"

namespace inferactive {

// Deterministic random source.  All draws go through explicit inverse-CDF or
// Box-Muller transforms (no std::normal_distribution) so that a given seed
// produces the same stream on every run and regardless of how many threads
// share the work: each work item forks its own stream with Rng::stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Independent substream derived from (seed, id) via splitmix64 mixing.
  static Rng stream(std::uint64_t seed, std::uint64_t id) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (id + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return Rng(x ^ (x >> 31));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on (0, 1].
  double uniform() { return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; }

  // Uniform on (0, 1), for inverse CDFs with poles at both ends.
  double uniform_open() {
    for (;;) {
      double u = uniform();
      if (u < 1.0) return u;
    }
  }

  // Standard normal via Box-Muller, one value per call (no cached spare).
  double normal() {
    double u1 = uniform();
    double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
  }

  double laplace(double scale) {
    double v = uniform_open() - 0.5;
    return v < 0.0 ? scale * std::log1p(2.0 * v) : -scale * std::log1p(-2.0 * v);
  }

  double logistic(double scale) {
    double u = uniform_open();
    return scale * std::log(u / (1.0 - u));
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection to avoid modulo bias.
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % n;
    for (;;) {
      std::uint64_t x = gen_();
      if (x < limit) return x % n;
    }
  }

  Eigen::VectorXd normal_vec(Eigen::Index d) {
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = normal();
    return z;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace inferactive
