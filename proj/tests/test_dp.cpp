#include <catch_amalgamated.hpp>

#include "memperc/dp.hpp"

#include <cmath>
#include <numbers>

using namespace memperc;
using Catch::Approx;

namespace {

constexpr double e = std::numbers::e;

// Plain double-precision sum for small D and T.
double naive_absorbing_sum(double d, int t, double p) {
  double fact = std::tgamma(d);
  double sum = 0;
  for (int i = 0; i < t; ++i) sum += std::pow(t + 1.0 - i, d - 1) / fact * std::pow(d * p, i);
  return std::pow(1 - p, d) * sum;
}

struct Bond {
  std::vector<int> from, to;
};

// Cone lattice for D = 2 written out directly: sites (a, s - a).
std::vector<std::vector<Bond>> cone2(int t) {
  std::vector<std::vector<Bond>> levels(t);
  for (int i = 0; i < t; ++i) {
    const int s = t - i;
    for (int a = 0; a <= s; ++a) {
      if (a > 0) levels[i].push_back({{a, s - a}, {a - 1, s - a}});
      if (s - a > 0) levels[i].push_back({{a, s - a}, {a, s - a - 1}});
    }
  }
  return levels;
}

// Expected absorbing count by enumerating all bond configurations.
double brute_force_absorbing(int t, double p) {
  const auto levels = cone2(t);
  std::vector<Bond> bonds;
  for (const auto& l : levels) bonds.insert(bonds.end(), l.begin(), l.end());
  const std::size_t nb = bonds.size();
  double expectation = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << nb); ++mask) {
    double weight = 1;
    for (std::size_t b = 0; b < nb; ++b) weight *= (mask >> b & 1) ? p : 1 - p;
    // Paths reaching each site, level by level.
    std::map<std::vector<int>, double> paths;
    for (int a = 0; a <= t; ++a) paths[{a, t - a}] = 1;
    double absorbed = 0;
    std::size_t offset = 0;
    for (int i = 0; i < t; ++i) {
      std::map<std::vector<int>, bool> has_out;
      for (std::size_t k = 0; k < levels[i].size(); ++k) {
        const auto& bond = levels[i][k];
        has_out.try_emplace(bond.from, false);
        if (mask >> (offset + k) & 1) {
          paths[bond.to] += paths[bond.from];
          has_out[bond.from] = true;
        }
      }
      for (const auto& [site, out] : has_out) {
        if (!out) absorbed += paths[site];
      }
      offset += levels[i].size();
    }
    expectation += weight * absorbed;
  }
  return expectation;
}

}  // namespace

TEST_CASE("LogValue arithmetic", "[dp]") {
  const auto a = LogValue::from(3.0), b = LogValue::from(-5.0);
  CHECK((a + b).value() == Approx(-2.0));
  CHECK((a * b).value() == Approx(-15.0));
  CHECK((a + LogValue::zero()).value() == Approx(3.0));
  CHECK((a + LogValue::from(-3.0)).is_zero());
  CHECK(LogValue::from(0.0).is_zero());
  const auto huge = LogValue::from_log(1e6);
  CHECK((huge * huge).log_mag == Approx(2e6));
}

TEST_CASE("expected permeable count", "[dp]") {
  CHECK(expected_permeable({3, 2, 1.0}).value() == Approx(9.0));
  CHECK(expected_permeable({2, 3, 0.5}).value() == Approx(1.0));
  CHECK(expected_permeable({5, 4, 0.0}).is_zero());
  CHECK_THROWS_AS(expected_permeable({3, 2, 1.5}), std::domain_error);
}

TEST_CASE("expected absorbing sum", "[dp]") {
  CHECK(expected_absorbing_sum({2, 3, 0.5}).value() == Approx(2.25));
  CHECK(expected_absorbing_sum({4, 5, 1.0}).is_zero());
  CHECK(expected_absorbing_sum({4, 5, 0.0}).value() == Approx(std::pow(6.0, 3) / 6.0));
  for (double d : {2.0, 3.0, 5.0, 8.0}) {
    for (int t : {1, 4, 9}) {
      for (double p : {0.1, 0.3, 0.7}) {
        CHECK(expected_absorbing_sum({d, static_cast<std::uint64_t>(t), p}).value() ==
              Approx(naive_absorbing_sum(d, t, p)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("gamma closed form tracks the exact sum", "[dp]") {
  double worst = 0;
  for (int d = 50; d <= 200; d += 10) {
    for (double f = 0.9; f <= 1.5 + 1e-9; f += 0.05) {
      const auto params = DpParams::with_default_depth(d, f * e / d);
      const double lg = expected_absorbing_closed(params, ClosedForm::gamma).log_mag;
      const double ls = expected_absorbing_sum(params).log_mag;
      worst = std::max(worst, std::abs(std::expm1(lg - ls)));
    }
  }
  CHECK(worst <= 0.15);
  const auto at = DpParams::with_default_depth(100, 1.2 * e / 100);
  CHECK(expected_absorbing_closed(at, ClosedForm::gamma).value() ==
        Approx(expected_absorbing_sum(at).value()).epsilon(0.15));
}

TEST_CASE("erfc closed form at ln Dp = 1 reduces to a power", "[dp]") {
  const double d = 100;
  const auto params = DpParams::with_default_depth(d, e / d);
  // erfc(0) = 1: (Dp)^D / 2 (1 - p)^D.
  const double expect = d * 1.0 - std::log(2.0) + d * std::log1p(-e / d);
  CHECK(expected_absorbing_closed(params, ClosedForm::erfc).log_mag ==
        Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(expected_absorbing_closed(DpParams::with_default_depth(d, 0.5 / d),
                                            ClosedForm::gamma),
                  std::domain_error);
}

TEST_CASE("gamma and erfc closed forms agree near p = e/D", "[dp]") {
  // Window: erfc argument between -1 and 0, i.e. from p = e/D upward.
  for (double d : {100.0, 300.0, 1e3, 1e4, 1e5}) {
    for (double z = -1.0; z <= 1e-9; z += 0.125) {
      // Solve sqrt(D)(1 - L)/sqrt(2L) = z for L = ln Dp.
      double l = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double g = std::sqrt(d) * (1 - l) / std::sqrt(2 * l) - z;
        const double dg = -std::sqrt(d / 2) * (1 / std::sqrt(l) + (1 - l) / (2 * l * std::sqrt(l)));
        l -= g / dg;
      }
      const auto params = DpParams::with_default_depth(d, std::exp(l) / d);
      const double lg = expected_absorbing_closed(params, ClosedForm::gamma).log_mag;
      const double le = expected_absorbing_closed(params, ClosedForm::erfc).log_mag;
      INFO("D=" << d << " z=" << z);
      CHECK(std::abs(std::expm1(lg - le)) <= 0.05);
    }
  }
}

TEST_CASE("permeable ratio equals the count ratio of the erfc form", "[dp]") {
  for (double d : {10.0, 100.0, 1e3}) {
    for (double f : {1.0, 1.3, 2.0}) {
      const auto params = DpParams::with_default_depth(d, f * e / d);
      const double r = ratio_from_counts(expected_permeable(params),
                                         expected_absorbing_closed(params, ClosedForm::erfc));
      CHECK(permeable_ratio(d, params.prob) == Approx(r).epsilon(1e-12));
    }
  }
  CHECK(permeable_ratio(10, 1.0) == 1.0);
  CHECK_THROWS_AS(permeable_ratio(100, 0.5 / 100), std::domain_error);
}

TEST_CASE("permeable ratio crosses one half near e/D", "[dp]") {
  for (double d : {1e2, 1e3, 1e4}) {
    // Below Dp ~ 1.5 the erfc reduction breaks down and r turns back up.
    double lo = 0.6 * e / d, hi = std::min(1.0, 5 * e / d);
    REQUIRE(permeable_ratio(d, lo) < 0.5);
    REQUIRE(permeable_ratio(d, hi) > 0.5);
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (permeable_ratio(d, mid) < 0.5 ? lo : hi) = mid;
    }
    const double units = lo * d / e;
    CHECK(units >= 0.8);
    CHECK(units <= 1.3);
  }
}

TEST_CASE("permeable ratio is monotone and sharpens with D", "[dp]") {
  for (double d : {50.0, 200.0, 1e3}) {
    double prev = 0;
    const double lo = 0.6 * e / d, hi = std::min(1.0, 3 * e / d);
    for (int i = 0; i <= 400; ++i) {
      const double r = permeable_ratio(d, lo + (hi - lo) * i / 400);
      REQUIRE(r >= prev - 1e-15);
      prev = r;
    }
  }
  auto max_slope = [](double d) {
    double best = 0;
    // In units of x = pD / e so the two curves share an axis.
    for (int i = 0; i < 2000; ++i) {
      const double x0 = 0.6 + i * 1e-3, x1 = x0 + 1e-3;
      const double r0 = permeable_ratio(d, x0 * e / d);
      const double r1 = permeable_ratio(d, x1 * e / d);
      best = std::max(best, (r1 - r0) / 1e-3);
    }
    return best;
  };
  CHECK(max_slope(500) > max_slope(50));
}

TEST_CASE("log-domain formulas stay finite up to D = 1e5", "[dp]") {
  for (double d : {1e2, 1e3, 1e4, 1e5}) {
    for (double f : {1.0, 1.5, 3.0}) {
      const auto params = DpParams::with_default_depth(d, f * e / d);
      CHECK(std::isfinite(expected_permeable(params).log_mag));
      CHECK(std::isfinite(expected_absorbing_sum(params).log_mag));
      CHECK(std::isfinite(expected_absorbing_closed(params, ClosedForm::gamma).log_mag));
      CHECK(std::isfinite(expected_absorbing_closed(params, ClosedForm::erfc).log_mag));
      const double r = permeable_ratio(d, params.prob);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
    }
  }
}

TEST_CASE("near-transition expansion", "[dp]") {
  const double at_zero = 1.0 / (1.0 + 0.5 * std::exp(1.0 - e));
  CHECK(at_zero == Approx(0.917695).margin(1e-6));
  for (double d : {1e2, 1e4, 1e8}) CHECK(ratio_near_transition(d, 0.0) == Approx(at_zero));
  CHECK(ratio_near_transition(1e8, 0.05) > 0.999);
  CHECK(ratio_near_transition(1e8, -0.05) < 1e-3);
  for (double delta = -0.1; delta <= 0.1 + 1e-12; delta += 0.005) {
    const double full = permeable_ratio(1e3, (e + delta) / 1e3);
    CHECK(std::abs(ratio_near_transition(1e3, delta) - full) <= 0.02);
  }
}

TEST_CASE("truncated exponential ratio", "[dp]") {
  for (double x : {0.5, 5.0, 50.0}) {
    CHECK(truncated_exp_ratio(static_cast<std::uint64_t>(10 * x + 20), x).exact ==
          Approx(1.0).epsilon(1e-12));
    CHECK(truncated_exp_ratio(0, x).exact == Approx(std::exp(-x)));
  }
  // Direct summation oracle.
  double term = std::exp(-7.0), sum = 0;
  for (int k = 0; k <= 9; ++k) {
    sum += term;
    term *= 7.0 / (k + 1);
  }
  CHECK(truncated_exp_ratio(9, 7.0).exact == Approx(sum).epsilon(1e-13));
  CHECK_THROWS(truncated_exp_ratio(3, 0.0));
}

TEST_CASE("Poisson weights approach a normal density at x = 50", "[dp]") {
  double worst = 0;
  for (int k = 0; k <= 100; ++k) {
    worst = std::max(worst, std::abs(poisson_term(k, 50) - normal_pdf(k, 50, 50)));
  }
  CHECK(worst <= 0.01);
  double worst_cdf = 0;
  for (int n = 20; n <= 100; ++n) {
    const auto r = truncated_exp_ratio(n, 50);
    worst_cdf = std::max(worst_cdf, std::abs(r.exact - r.approx));
  }
  // Without a continuity correction the gap at n = x is about half a
  // Poisson mass: P(Poisson(50) <= 50) - 1/2.
  const double at_mean = regularized_gamma_q(51.0, 50.0) - 0.5;
  CHECK(at_mean == Approx(0.0375).margin(5e-4));
  CHECK(worst_cdf == Approx(at_mean).epsilon(1e-9));
}

TEST_CASE("cone lattice geometry", "[dp][lattice]") {
  const ConeLattice l(3, 4);
  for (unsigned i = 0; i <= 4; ++i) {
    const unsigned s = 4 - i;
    CHECK(l.sites_at(i) == (s + 1) * (s + 2) / 2);
  }
  const ConeLattice l2(2, 6);
  CHECK(l2.bond_count() == 6 * 7 / 2 * 2);  // each level-s row has 2s bonds
  CHECK_THROWS_AS(ConeLattice(3, 400, 1000), std::length_error);
}

TEST_CASE("lattice recursion equals brute-force expectation", "[dp][lattice]") {
  for (int t : {1, 2, 3}) {
    const ConeLattice l(2, t);
    for (double p : {0.2, 0.5, 0.9}) {
      const auto ex = l.expected(p);
      // Every base-to-apex path has T bonds, and there are D^T of them.
      CHECK(ex.permeable == Approx(std::pow(2 * p, t)).epsilon(1e-13));
      CHECK(ex.absorbing == Approx(brute_force_absorbing(t, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sampled lattice limits", "[dp][lattice]") {
  const auto full = simulate_cone_lattice(3, 5, 1.0, 10, 1);
  CHECK(full.sampled.permeable.value() == Approx(std::pow(3.0, 5)));
  CHECK(full.sampled.absorbing.is_zero());
  const auto none = simulate_cone_lattice(2, 5, 0.0, 10, 1);
  CHECK(none.sampled.permeable.is_zero());
  CHECK(none.sampled.absorbing.value() == Approx(6.0));
  CHECK(none.sampled.ratio() == 0.0);
}

TEST_CASE("Monte Carlo matches the exact lattice expectation", "[dp][lattice]") {
  for (double p : {0.3, 0.6, 0.9}) {
    const auto sim = simulate_cone_lattice(2, 6, p, 10000, 2024);
    INFO("p=" << p);
    CHECK(std::abs(sim.sampled.permeable.value() - sim.exact.permeable.value()) <=
          3 * sim.se_permeable);
    CHECK(std::abs(sim.sampled.absorbing.value() - sim.exact.absorbing.value()) <=
          3 * sim.se_absorbing);
  }
  const auto a = simulate_cone_lattice(3, 4, 0.5, 100, 7);
  const auto b = simulate_cone_lattice(3, 4, 0.5, 100, 7);
  CHECK(a.sampled.permeable.log_mag == b.sampled.permeable.log_mag);
}
