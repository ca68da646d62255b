#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "inferactive/math/normal.hpp"
#include "inferactive/math/parallel.hpp"
#include "inferactive/math/rng.hpp"
#include "inferactive/math/stats.hpp"

using namespace inferactive;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(a.uniform() == b.uniform());
    REQUIRE(a.normal() == b.normal());
    REQUIRE(a.laplace(0.7) == b.laplace(0.7));
    REQUIRE(a.logistic(1.2) == b.logistic(1.2));
  }
}

TEST_CASE("derived substreams differ from each other") {
  Rng a = Rng::stream(7, 0);
  Rng b = Rng::stream(7, 1);
  int equal = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() == b.next_u64()) ++equal;
  CHECK(equal == 0);
}

TEST_CASE("uniform stays in (0,1]") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
  }
}

TEST_CASE("normal draws have the right distribution") {
  Rng rng(11);
  const int n = 1000000;
  std::vector<double> u(n);
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sq += z * z;
    u[i] = norm_cdf(z);
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(var == Catch::Approx(1.0).margin(0.01));
  // Probability-integral transform should be uniform.
  CHECK(ks_uniform(u) < 2.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("laplace and logistic draws match their variances") {
  Rng rng(13);
  const int n = 400000;
  std::vector<double> lap(n), lgi(n);
  for (int i = 0; i < n; ++i) {
    lap[static_cast<std::size_t>(i)] = rng.laplace(0.7);
    lgi[static_cast<std::size_t>(i)] = rng.logistic(1.2);
  }
  CHECK(mean_of(lap) == Catch::Approx(0.0).margin(0.01));
  CHECK(variance_of(lap) == Catch::Approx(2.0 * 0.7 * 0.7).epsilon(0.03));
  CHECK(mean_of(lgi) == Catch::Approx(0.0).margin(0.02));
  CHECK(variance_of(lgi) == Catch::Approx(1.2 * 1.2 * pi * pi / 3.0).epsilon(0.03));
}

TEST_CASE("parallel_for result is independent of thread count") {
  const std::size_t n = 500;
  std::vector<double> serial(n), parallel(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(99, i);
    serial[i] = rng.normal();
  }
  parallel_for(n, [&](std::size_t i) {
    Rng rng = Rng::stream(99, i);
    parallel[i] = rng.normal();
  });
  CHECK(serial == parallel);
}

TEST_CASE("parallel_for propagates exceptions") {
  CHECK_THROWS_AS(parallel_for(100, [](std::size_t i) {
                    if (i == 57) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

TEST_CASE("ks statistics behave on known inputs") {
  // Perfectly spaced sample has KS distance 1/(2n) against uniform.
  std::vector<double> evenly;
  const int n = 100;
  for (int i = 0; i < n; ++i) evenly.push_back((i + 0.5) / n);
  CHECK(ks_uniform(evenly) == Catch::Approx(0.005).margin(1e-12));
  // Identical samples have two-sample distance 0; disjoint ones distance 1.
  std::vector<double> a{1.0, 2.0, 3.0}, b{1.0, 2.0, 3.0}, c{10.0, 11.0, 12.0};
  CHECK(ks_two_sample(a, b) == Catch::Approx(0.0).margin(1e-15));
  CHECK(ks_two_sample(a, c) == Catch::Approx(1.0).margin(1e-15));
}
