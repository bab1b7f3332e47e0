#include <catch_amalgamated.hpp>

#include "memperc/integrators.hpp"

#include <cmath>
#include <numeric>

using namespace memperc;
using Catch::Approx;

namespace {

void growth(std::span<const double> x, std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i];
}

double error_at_one(const ButcherTableau& tab, int steps) {
  std::vector<double> x{1.0};
  RungeKutta rk(tab, 1);
  const double dt = 1.0 / steps;
  for (int n = 0; n < steps; ++n) rk.step(growth, std::span<double>(x), dt);
  return std::abs(x[0] - std::exp(1.0));
}

// Least-squares slope of log(err) against log(dt).
double convergence_slope(const ButcherTableau& tab, std::vector<int> steps) {
  std::vector<double> lx, ly;
  for (int n : steps) {
    lx.push_back(std::log(1.0 / n));
    ly.push_back(std::log(error_at_one(tab, n)));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("built-in tableaus are consistent", "[integrators]") {
  for (auto m : {Method::euler, Method::trapezoid, Method::rk4}) {
    const auto t = tableau_for(m);
    REQUIRE_NOTHROW(t.validate());
    CHECK(parse_method(method_name(m)) == m);
  }
  CHECK(tableau_euler().stages() == 1);
  CHECK(tableau_trapezoid().stages() == 2);
  CHECK(tableau_rk4().stages() == 4);
  CHECK_THROWS_AS(parse_method("midpoint"), std::invalid_argument);

  ButcherTableau bad{"bad", {0.5, 0.4}, {{0, 0}, {1, 0}}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ButcherTableau implicit{"implicit", {1.0}, {{0.5}}};
  CHECK_THROWS_AS(implicit.validate(), std::invalid_argument);
}

TEST_CASE("one step on x' = x reproduces the Taylor polynomial", "[integrators]") {
  // Order-q explicit methods with q stages agree with sum_{k<=q} dt^k / k!.
  const double dt = 0.1;
  auto taylor = [&](int q) {
    double s = 0, term = 1;
    for (int k = 0; k <= q; ++k) {
      s += term;
      term *= dt / (k + 1);
    }
    return s;
  };
  CHECK(step(growth, {1.0}, dt, tableau_euler())[0] == Approx(taylor(1)).epsilon(1e-15));
  CHECK(step(growth, {1.0}, dt, tableau_trapezoid())[0] == Approx(taylor(2)).epsilon(1e-15));
  CHECK(step(growth, {1.0}, dt, tableau_rk4())[0] == Approx(taylor(4)).epsilon(1e-15));
}

TEST_CASE("convergence slopes match the nominal orders", "[integrators][order]") {
  CHECK(convergence_slope(tableau_euler(), {64, 128, 256, 512, 1024}) == Approx(1.0).margin(0.2));
  CHECK(convergence_slope(tableau_trapezoid(), {64, 128, 256, 512, 1024}) ==
        Approx(2.0).margin(0.2));
  CHECK(convergence_slope(tableau_rk4(), {8, 16, 32, 64, 128}) == Approx(4.0).margin(0.2));
}

TEST_CASE("each step costs exactly one evaluation per stage", "[integrators]") {
  for (auto m : {Method::euler, Method::trapezoid, Method::rk4}) {
    std::uint64_t calls = 0;
    auto counted = [&](std::span<const double> x, std::span<double> dx) {
      ++calls;
      growth(x, dx);
    };
    RungeKutta rk(tableau_for(m), 2);
    std::vector<double> x{1.0, 2.0};
    for (int n = 0; n < 7; ++n) rk.step(counted, std::span<double>(x), 0.01);
    CHECK(calls == 7 * rk.stages());
  }
}

TEST_CASE("non-finite stages are reported", "[integrators]") {
  int call = 0;
  auto blows_up = [&](std::span<const double>, std::span<double> dx) {
    dx[0] = (++call == 3) ? std::numeric_limits<double>::infinity() : 1.0;
  };
  RungeKutta rk(tableau_rk4(), 1);
  std::vector<double> x{0.0};
  try {
    rk.step(blows_up, std::span<double>(x), 0.1);
    FAIL("expected NonFiniteDerivative");
  } catch (const NonFiniteDerivative& e) {
    CHECK(e.stage() == 2);
  }
  auto nan_field = [](std::span<const double>, std::span<double> dx) { dx[0] = std::nan(""); };
  CHECK_THROWS_AS(step(nan_field, {0.0}, 0.1, tableau_euler()), NonFiniteDerivative);
}

TEST_CASE("integrate stops when solved and counts evaluations", "[integrators]") {
  // x' = 1 from 0; "solved" once x >= 1. With dt = 0.3 that takes 4 steps.
  auto unit = [](std::span<const double>, std::span<double> dx) { dx[0] = 1.0; };
  auto no_clamp = [](std::span<double>) {};
  auto reached = [](std::span<const double> x) { return x[0] >= 1.0 - 1e-12; };

  for (auto m : {Method::euler, Method::trapezoid, Method::rk4}) {
    std::vector<double> x{0.0};
    const auto r = integrate(unit, no_clamp, reached, x, tableau_for(m), {0.3, 100});
    CHECK(r.solved);
    CHECK(r.steps == 4);
    CHECK(r.fn_evals == 4 * tableau_for(m).stages());
  }

  std::vector<double> x{0.0};
  auto budget = integrate(unit, no_clamp, reached, x, tableau_euler(), {0.1, 5});
  CHECK_FALSE(budget.solved);
  CHECK(budget.steps == 5);

  std::vector<double> done{2.0};
  CHECK(integrate(unit, no_clamp, reached, done, tableau_euler(), {0.1, 5}) ==
        IntegrationResult{true, 0, 0});

  // A sparse check interval still tests the final step.
  std::vector<double> y{0.0};
  const auto sparse =
      integrate(unit, no_clamp, reached, y, tableau_euler(), {0.25, 4}, 3);
  CHECK(sparse.solved);
  CHECK(sparse.steps == 4);

  CHECK_THROWS(integrate(unit, no_clamp, reached, y, tableau_euler(), {0.0, 4}));
  CHECK_THROWS(integrate(unit, no_clamp, reached, y, tableau_euler(), {0.1, 0}));
}

TEST_CASE("clamping is applied after whole steps only", "[integrators]") {
  // Stages see unclamped intermediate states.
  std::vector<double> seen;
  auto record = [&](std::span<const double> x, std::span<double> dx) {
    seen.push_back(x[0]);
    dx[0] = 10.0;
  };
  auto clamp_unit = [](std::span<double> x) { x[0] = std::min(x[0], 1.0); };
  auto never = [](std::span<const double>) { return false; };
  std::vector<double> x{0.0};
  integrate(record, clamp_unit, never, x, tableau_trapezoid(), {0.2, 2});
  REQUIRE(seen.size() == 4);
  CHECK(seen[0] == 0.0);
  CHECK(seen[1] == Approx(2.0));  // stage beyond the clamp bound
  CHECK(seen[2] == 1.0);           // clamped after step one
  CHECK(x[0] == 1.0);
}
