#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "irlab/divergence.hpp"
#include "irlab/errors.hpp"

#include "test_util.hpp"

using namespace irlab;
using namespace irlab::test;

TEST_CASE("builtin registry exposes six divergences in a fixed order") {
  const auto& all = builtin_divergences();
  REQUIRE(all.size() == 6);
  const std::vector<std::string> names = {
      "total_variation", "pearson_chi2",      "squared_hellinger",
      "kl",              "reverse_kl",        "jensen_shannon"};
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i].name == names[i]);
    CHECK(&find_divergence(names[i]) == &all[i]);
  }
  // Stability guards are enabled exactly where conjugates can overflow.
  CHECK_FALSE(find_divergence("total_variation").stability.enabled);
  CHECK_FALSE(find_divergence("pearson_chi2").stability.enabled);
  CHECK_FALSE(find_divergence("squared_hellinger").stability.enabled);
  CHECK(find_divergence("kl").stability.enabled);
  CHECK(find_divergence("reverse_kl").stability.enabled);
  CHECK(find_divergence("jensen_shannon").stability.enabled);
  CHECK(find_divergence("total_variation").duality_bound == 1e-4);
  CHECK(find_divergence("pearson_chi2").duality_bound == 1e-4);
  CHECK(find_divergence("squared_hellinger").duality_bound == 1e-4);
  CHECK(find_divergence("kl").duality_bound == 1e-3);
  CHECK(find_divergence("reverse_kl").duality_bound == 1e-3);
  CHECK(find_divergence("jensen_shannon").duality_bound == 1e-3);
  CHECK(throws_with<Error>([] { find_divergence("hellinger"); },
                           "unknown divergence"));
}

TEST_CASE("every generator vanishes at one and is midpoint convex") {
  for (const auto& spec : builtin_divergences()) {
    CAPTURE(spec.name);
    CHECK(std::abs(spec.f(1.0)) <= 1e-12);
    for (int i = 1; i < 60; ++i) {
      for (int j = i + 1; j <= 60; ++j) {
        const double a = 0.05 * i;
        const double b = 0.05 * j;
        const double mid = spec.f(0.5 * (a + b));
        CHECK(mid <= 0.5 * (spec.f(a) + spec.f(b)) + 1e-10);
      }
    }
  }
}

TEST_CASE("slope at infinity matches the tail of the generator") {
  const double x = 1e8;
  auto tail = [&](const char* name) {
    return find_divergence(name).f(x) / x;
  };
  CHECK(std::abs(tail("total_variation") - 0.5) <= 1e-3);
  CHECK(std::abs(tail("squared_hellinger") - 1.0) <= 1e-3);
  CHECK(std::abs(tail("reverse_kl") - 0.0) <= 1e-3);
  CHECK(std::abs(tail("jensen_shannon") - std::log(2.0)) <= 1e-3);
  CHECK(tail("pearson_chi2") > 1e3);
  CHECK(tail("kl") > 10.0);
  // Registry constants agree with those tails.
  CHECK(find_divergence("total_variation").slope_at_infinity == 0.5);
  CHECK(find_divergence("squared_hellinger").slope_at_infinity == 1.0);
  CHECK(find_divergence("reverse_kl").slope_at_infinity == 0.0);
  CHECK(find_divergence("jensen_shannon").slope_at_infinity ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::isinf(find_divergence("pearson_chi2").slope_at_infinity));
  CHECK(std::isinf(find_divergence("kl").slope_at_infinity));
}

TEST_CASE("numeric conjugates match the closed forms on default grids") {
  for (const auto& spec : builtin_divergences()) {
    CAPTURE(spec.name);
    CHECK(conjugate_check(spec) <= spec.duality_bound);
  }
}

TEST_CASE("pearson grid supremum at x=2 reproduces f(2) = 1") {
  // sup_t [2t - f*(t)] with f*(t) = t^2/4 + t peaks at t = 2(x-1) = 2.
  const auto& spec = find_divergence("pearson_chi2");
  const double x = 2.0;
  double best = -kInf;
  const auto& g = spec.default_grid;
  for (int i = 0; i < g.t_points; ++i) {
    const double t = g.t_lo + (g.t_hi - g.t_lo) * i / (g.t_points - 1);
    best = std::max(best, x * t - spec.f_star(t));
  }
  CHECK(best == doctest::Approx(spec.f(2.0)).epsilon(1e-4));
  CHECK(spec.f(2.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("hellinger duality attains f(4) = 1 at t = 1/2") {
  const auto& spec = find_divergence("squared_hellinger");
  CHECK(spec.f(4.0) == doctest::Approx(1.0).epsilon(1e-12));
  const double t = 0.5;
  CHECK(4.0 * t - spec.f_star(t) == doctest::Approx(1.0).epsilon(1e-12));
  // Nearby grid points do not exceed the supremum.
  CHECK(4.0 * 0.49 - spec.f_star(0.49) <= 1.0);
  CHECK(4.0 * 0.51 - spec.f_star(0.51) <= 1.0);
}

TEST_CASE("total variation conjugate is the identity on its band") {
  const auto& spec = find_divergence("total_variation");
  CHECK(spec.f_star(0.3) == 0.3);
  CHECK(spec.f_star(-0.5) == -0.5);
  CHECK(spec.f_star_prime(0.0) == 1.0);
  CHECK(spec.dom_f_star.lo == -0.5);
  CHECK(spec.dom_f_star.hi == 0.5);
  // At x = 1 the dual supremum is zero: t*1 - t = 0 for every t in band.
  CHECK(spec.f(1.0) == 0.0);
}

TEST_CASE("an inconsistent conjugate is flagged by the duality gap") {
  FDivergenceSpec bogus = find_divergence("pearson_chi2");
  bogus.f_star = [](double t) { return t; };
  bogus.f_star_prime = [](double) { return 1.0; };
  CHECK(conjugate_check(bogus) >= 0.2);
}

TEST_CASE("conjugate derivatives agree with central differences") {
  struct Probe {
    const char* name;
    std::vector<double> ts;
  };
  const std::vector<Probe> probes = {
      {"total_variation", {-0.4, -0.1, 0.0, 0.2, 0.45}},
      {"pearson_chi2", {-3.0, -1.0, 0.0, 1.5, 4.0}},
      {"squared_hellinger", {-2.0, -0.5, 0.0, 0.3}},
      {"kl", {-3.0, -1.0, 0.0, 1.0, 2.0}},
      {"reverse_kl", {-5.0, -2.0, -0.5, -0.1}},
      {"jensen_shannon", {-3.0, -1.0, 0.0, 0.3}},
  };
  const double h = 1e-6;
  for (const auto& probe : probes) {
    const auto& spec = find_divergence(probe.name);
    for (double t : probe.ts) {
      CAPTURE(probe.name);
      CAPTURE(t);
      const double numeric =
          (spec.f_star(t + h) - spec.f_star(t - h)) / (2.0 * h);
      CHECK(std::abs(spec.f_star_prime(t) - numeric) <= 1e-5);
    }
  }
}

TEST_CASE("degenerate grids are rejected") {
  FDivergenceSpec spec = find_divergence("kl");
  spec.default_grid.x_points = 1;
  CHECK_THROWS_AS(conjugate_check(spec), Error);

  FDivergenceSpec tv = find_divergence("total_variation");
  tv.default_grid.t_lo = 0.6;  // entirely above dom(f*) = [-1/2, 1/2]
  CHECK(throws_with<Error>([&] { conjugate_check(tv); }, "empty t grid"));
}
