#include <catch_amalgamated.hpp>

#include "memperc/fitting.hpp"
#include "memperc/random.hpp"

#include <cmath>

using namespace memperc;
using Catch::Approx;

namespace {

std::vector<TransitionPoint> logistic_data(double c, double d, double lo, double hi, int n,
                                           double noise, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TransitionPoint> pts;
  for (int i = 0; i < n; ++i) {
    const double dt = lo + (hi - lo) * i / (n - 1);
    const double a = 1.0 / (1.0 + std::exp(-c * (dt - d))) + noise * normal01(rng);
    pts.push_back({dt, a, 1.0});
  }
  return pts;
}

}  // namespace

TEST_CASE("Nelder-Mead finds the Rosenbrock minimum", "[fitting]") {
  auto rosen = [](const std::array<double, 2>& x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  };
  const auto r = nelder_mead<2>(rosen, {-1.2, 1.0}, {0.5, 0.5}, {-5, -5}, {5, 5}, 1e-12);
  CHECK(r.converged);
  CHECK(r.x[0] == Approx(1.0).margin(1e-5));
  CHECK(r.x[1] == Approx(1.0).margin(1e-5));
  for (std::size_t i = 1; i < r.history.size(); ++i) REQUIRE(r.history[i] <= r.history[i - 1]);
}

TEST_CASE("Nelder-Mead respects bounds", "[fitting]") {
  auto bowl = [](const std::array<double, 2>& x) {
    return std::pow(x[0] - 3, 2) + std::pow(x[1] + 2, 2);
  };
  const auto r = nelder_mead<2>(bowl, {0.0, 0.0}, {0.3, 0.3}, {-1, -1}, {1, 1}, 1e-12);
  CHECK(r.x[0] == Approx(1.0).margin(1e-8));
  CHECK(r.x[1] == Approx(-1.0).margin(1e-8));
}

TEST_CASE("logistic level inversion", "[fitting]") {
  SigmoidFit fit;
  fit.c = -50;
  fit.d = 0.25;
  // Solve 1/(1 + exp(50 (dt - 0.25))) = 0.95 directly.
  const double dt95 = 0.25 - std::log(0.95 / 0.05) / 50;
  CHECK(dt_at_level(fit, 0.95) == Approx(dt95).epsilon(1e-14));
  CHECK(dt_at_level(fit, 0.95) == Approx(0.1911).margin(1e-4));
  CHECK(fit(dt_at_level(fit, 0.95)) == Approx(0.95).epsilon(1e-14));
  CHECK(dt_at_level(fit, 0.5) == 0.25);
  CHECK_THROWS_AS(dt_at_level(fit, 1.0), std::domain_error);
}

TEST_CASE("sigmoid fit recovers noiseless parameters", "[fitting]") {
  for (auto [c, d] : {std::pair{-50.0, 0.25}, {-20.0, 0.5}, {-400.0, 0.12}}) {
    const auto pts = logistic_data(c, d, d - 8 / std::abs(c), d + 8 / std::abs(c), 25, 0.0, 1);
    const auto fit = fit_sigmoid(pts);
    CHECK(fit.c == Approx(c).epsilon(1e-5));
    CHECK(fit.d == Approx(d).epsilon(1e-6));
    CHECK(fit.residual < 1e-12);
  }
}

TEST_CASE("sigmoid fit under noise", "[fitting]") {
  const auto pts = logistic_data(-50, 0.25, 0.05, 0.45, 30, 0.02, 3);
  const auto fit = fit_sigmoid(pts);
  CHECK(fit.c == Approx(-50).epsilon(0.15));
  CHECK(fit.d == Approx(0.25).margin(0.01));
}

TEST_CASE("sigmoid fit needs both shoulders", "[fitting]") {
  CHECK_THROWS_AS(fit_sigmoid(logistic_data(-50, 0.25, 0.0, 0.2, 10, 0, 1)), FitError);
  CHECK_THROWS_AS(fit_sigmoid(logistic_data(-50, 0.25, 0.0, 1.0, 3, 0, 1)), FitError);
}

TEST_CASE("binomial weights", "[fitting]") {
  CHECK(weight_from_stderr(0.1) == Approx(100.0));
  CHECK(weight_from_stderr(0.0) == Approx(1e4));
}

TEST_CASE("power-law fit", "[fitting]") {
  std::vector<std::pair<double, double>> xy;
  for (double n : {100.0, 300.0, 1000.0, 3000.0}) xy.push_back({n, 2.5 * std::pow(n, -0.34)});
  const auto fit = fit_power_law(xy);
  CHECK(fit.exponent == Approx(-0.34).epsilon(1e-12));
  CHECK(fit.prefactor == Approx(2.5).epsilon(1e-12));
  CHECK(fit.r_squared == Approx(1.0));
  CHECK(fit(1e4) == Approx(2.5 * std::pow(1e4, -0.34)));

  // r^2 against a hand computation for three points.
  const std::vector<std::pair<double, double>> h{{1, 1}, {std::exp(1.0), std::exp(2.0)},
                                                 {std::exp(2.0), std::exp(3.0)}};
  // ln data: (0,0), (1,2), (2,3): sxx = 2, sxy = 3, syy = 14/3.
  const auto hf = fit_power_law(h);
  CHECK(hf.exponent == Approx(1.5));
  CHECK(hf.r_squared == Approx(9.0 / (2.0 * 14.0 / 3.0)));

  CHECK_THROWS_AS(fit_power_law({{1, 1}, {2, 2}}), FitError);
  CHECK_THROWS_AS(fit_power_law({{1, 1}, {2, -2}, {3, 3}}), FitError);
}

TEST_CASE("percolation model edge cases", "[fitting]") {
  // delta = a (1/(N dt) - b); Dp = e + delta.
  CHECK(dp_model(100, 1.0, 5.0, 1.0, 500) == 0.0);  // Dp below 1
  CHECK(dp_model(100, 1e-6, 5.0, 0.0, 500) == 1.0);  // p capped at 1
  const double p = (std::numbers::e + 5.0 * (1.0 / (1000 * 0.1) - 0.01)) / 500;
  CHECK(dp_model(1000, 0.1, 5.0, 0.01, 500) == permeable_ratio(500, p));
}

TEST_CASE("percolation fit round trip", "[fitting]") {
  const double n = 1000, b = 0.01, D = 500;
  Rng rng(12);
  std::vector<TransitionPoint> pts;
  for (int i = 0; i <= 30; ++i) {
    const double dt = 0.07 + 0.1 * i / 30;
    pts.push_back({dt, dp_model(n, dt, 5, b, D) + 0.01 * normal01(rng), 1.0});
  }
  const auto fit = fit_dp_ratio(n, pts);
  CHECK(fit.a == 5.0);
  CHECK(fit.b == Approx(b).epsilon(0.1));
  CHECK(fit.D == Approx(D).epsilon(0.1));
  CHECK_FALSE(fit.at_bound);

  std::vector<TransitionPoint> flat(6, TransitionPoint{0.1, 0.5, 1.0});
  CHECK_THROWS_AS(fit_dp_ratio(n, flat), FitError);
}
