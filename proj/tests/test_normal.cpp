#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "inferactive/math/normal.hpp"

using namespace inferactive;

namespace {

// Long-double reference for log P(Z > x), valid until erfcl underflows (~x=100).
long double log_sf_reference(long double x) {
  return std::log(0.5L * erfcl(x / std::sqrt(2.0L)));
}

}  // namespace

TEST_CASE("normal cdf matches tabulated high-precision values") {
  CHECK(norm_cdf(0.0) == Catch::Approx(0.5).margin(1e-16));
  CHECK(norm_cdf(1.0) == Catch::Approx(0.8413447460685429).margin(1e-15));
  CHECK(norm_cdf(1.96) == Catch::Approx(0.9750021048517795).margin(1e-15));
  CHECK(norm_cdf(-2.5) == Catch::Approx(0.006209665325776132).margin(1e-16));
  CHECK(norm_sf(1.0) == Catch::Approx(0.15865525393145707).margin(1e-15));
}

TEST_CASE("log_norm_sf agrees with direct evaluation at moderate arguments") {
  for (double z : {-8.0, -3.0, -1.0, 0.0, 0.5, 1.0, 2.0, 5.0, 8.0}) {
    CHECK(log_norm_sf(z) == Catch::Approx(std::log(norm_sf(z))).epsilon(1e-12));
  }
}

TEST_CASE("log_norm_sf respects Mills-ratio bounds deep in the tail") {
  // phi(z) (1/z - 1/z^3) < P(Z > z) < phi(z) / z for z > 1.
  for (double z : {10.0, 20.0, 40.0, 100.0, 1000.0}) {
    double lo = log_norm_pdf(z) + std::log(1.0 / z - 1.0 / (z * z * z));
    double hi = log_norm_pdf(z) - std::log(z);
    double v = log_norm_sf(z);
    CHECK(v > lo);
    CHECK(v < hi);
  }
}

TEST_CASE("log_norm_sf agrees with a long-double reference") {
  for (double z : {9.0, 12.0, 15.0, 20.0, 25.5, 30.0}) {
    double ref = static_cast<double>(log_sf_reference(z));
    CHECK(log_norm_sf(z) == Catch::Approx(ref).epsilon(1e-10));
  }
}

TEST_CASE("erfcx matches a long-double reference on both sides of its switch") {
  // exp(x^2) stays representable in long double well past x = 25, so
  // expl(x^2) * erfcl(x) is an independent reference for both branches.
  for (double x : {0.5, 2.0, 10.0, 24.9, 24.999999, 25.000001, 25.1, 40.0, 100.0}) {
    long double xl = x;
    double ref = static_cast<double>(std::exp(xl * xl) * erfcl(xl));
    CHECK(erfcx(x) == Catch::Approx(ref).epsilon(1e-9));
  }
  // Series bracket: 1/(x sqrt(pi)) (1 - 1/(2x^2)) <= erfcx(x) < 1/(x sqrt(pi)).
  // The lower bound is attained in double arithmetic once higher-order terms
  // vanish (x ~ 1e6), hence >= rather than >.
  for (double x : {26.0, 50.0, 1e3, 1e6}) {
    double upper = 1.0 / (x * std::sqrt(pi));
    double lower = upper * (1.0 - 0.5 / (x * x));
    CHECK(erfcx(x) >= lower);
    CHECK(erfcx(x) < upper);
  }
}

TEST_CASE("log1mexp matches naive evaluation where that is stable") {
  for (double x : {-0.01, -0.5, -1.0, -5.0}) {
    CHECK(log1mexp(x) == Catch::Approx(std::log(1.0 - std::exp(x))).epsilon(1e-12));
  }
  // Deep negative: naive 1 - exp(x) loses precision, but the expansion
  // log(1 - e^x) = -e^x - e^(2x)/2 - ... gives a tight independent bound.
  for (double x : {-30.0, -50.0, -200.0}) {
    CHECK(std::fabs(log1mexp(x) + std::exp(x)) < std::exp(2.0 * x));
  }
  CHECK(log1mexp(-1e-12) == Catch::Approx(std::log(1e-12)).margin(1e-6));
  CHECK_THROWS(log1mexp(0.0));
}

TEST_CASE("log_norm_cdf_diff is stable in both tails") {
  // Moderate case: direct difference is fine and must agree.
  CHECK(log_norm_cdf_diff(-1.0, 1.0) ==
        Catch::Approx(std::log(norm_cdf(1.0) - norm_cdf(-1.0))).epsilon(1e-12));
  // Deep upper tail: long-double reference.
  long double ref = std::log(0.5L * (erfcl(10.0L / std::sqrt(2.0L)) - erfcl(11.0L / std::sqrt(2.0L))));
  CHECK(log_norm_cdf_diff(10.0, 11.0) == Catch::Approx(static_cast<double>(ref)).epsilon(1e-9));
  // Symmetry: P(a < Z < b) = P(-b < Z < -a).
  CHECK(log_norm_cdf_diff(-11.0, -10.0) ==
        Catch::Approx(log_norm_cdf_diff(10.0, 11.0)).epsilon(1e-12));
  CHECK_THROWS(log_norm_cdf_diff(2.0, 2.0));
}

TEST_CASE("norm_hazard matches phi/sf and its asymptotic envelope") {
  for (double z : {-10.0, -2.0, 0.0, 1.0, 5.0, 10.0}) {
    CHECK(norm_hazard(z) == Catch::Approx(norm_pdf(z) / norm_sf(z)).epsilon(1e-10));
  }
  // z < hazard(z) < z + 1/z for large z.
  for (double z : {20.0, 50.0, 200.0}) {
    CHECK(norm_hazard(z) > z);
    CHECK(norm_hazard(z) < z + 1.0 / z);
  }
  // Far left: hazard collapses to the density.
  CHECK(norm_hazard(-40.0) == Catch::Approx(norm_pdf(-40.0)).epsilon(1e-10));
}
