#pragma once

// Log-domain special functions: regularized incomplete gamma (series and
// Lentz continued fraction), log erfc with an asymptotic tail, normal
// distribution helpers.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace memperc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

/// log(1 + exp(z)), stable for any z.
inline double log1p_exp(double z) noexcept {
  if (z > 36.0) return z + std::exp(-z);
  return std::log1p(std::exp(z));
}

/// 1 / (1 + exp(z)), stable for any z.
inline double logistic_of_neg(double z) noexcept {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

namespace detail {

inline constexpr int kGammaMaxIter = 10'000'000;
inline constexpr double kGammaEps = 1e-16;

/// log of the series sum in P(s,x) = exp(-x + s ln x - lgamma(s+1)) * sum.
inline double log_gamma_series(double s, double x) {
  double term = 1.0, sum = 1.0;
  for (int n = 1; n < kGammaMaxIter; ++n) {
    term *= x / (s + n);
    sum += term;
    if (term < sum * kGammaEps) {
      return -x + s * std::log(x) - std::lgamma(s + 1.0) + std::log(sum);
    }
  }
  throw std::runtime_error("incomplete gamma series did not converge");
}

/// log Q(s,x) via the modified Lentz evaluation of the continued fraction.
inline double log_gamma_cf(double s, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kGammaMaxIter; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaEps) {
      return -x + s * std::log(x) - std::lgamma(s) + std::log(h);
    }
  }
  throw std::runtime_error("incomplete gamma continued fraction did not converge");
}

inline void check_gamma_args(double s, double x) {
  if (!(s > 0.0) || !(x >= 0.0)) {
    throw std::domain_error("incomplete gamma needs s > 0 and x >= 0");
  }
}

}  // namespace detail

/// log P(s, x) = log(gamma(s, x) / Gamma(s)).
inline double log_regularized_gamma_p(double s, double x) {
  detail::check_gamma_args(s, x);
  if (x == 0.0) return kNegInf;
  if (x < s + 1.0) return detail::log_gamma_series(s, x);
  const double lq = detail::log_gamma_cf(s, x);
  return std::log1p(-std::exp(lq));
}

/// log Q(s, x) = log(Gamma(s, x) / Gamma(s)).
inline double log_regularized_gamma_q(double s, double x) {
  detail::check_gamma_args(s, x);
  if (x == 0.0) return 0.0;
  if (x < s + 1.0) {
    const double lp = detail::log_gamma_series(s, x);
    return std::log1p(-std::exp(lp));
  }
  return detail::log_gamma_cf(s, x);
}

inline double regularized_gamma_p(double s, double x) {
  return std::exp(log_regularized_gamma_p(s, x));
}

inline double regularized_gamma_q(double s, double x) {
  return std::exp(log_regularized_gamma_q(s, x));
}

/// log of the lower incomplete gamma function gamma(s, x).
inline double log_lower_gamma(double s, double x) {
  return log_regularized_gamma_p(s, x) + std::lgamma(s);
}

/// log erfc(x), finite far into the tail where erfc itself underflows.
inline double log_erfc(double x) {
  if (x < 20.0) return std::log(std::erfc(x));
  // erfc(x) ~ exp(-x^2) / (x sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2x^2)^k
  const double inv = 1.0 / (2.0 * x * x);
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 12; ++k) {
    term *= -(2.0 * k - 1.0) * inv;
    sum += term;
  }
  return -x * x - std::log(x) - 0.5 * std::log(std::numbers::pi) + std::log(sum);
}

/// Standard normal cumulative distribution.
inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Density of N(mean, variance) at x.
inline double normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return std::exp(-d * d / (2.0 * variance)) /
         std::sqrt(2.0 * std::numbers::pi * variance);
}

}  // namespace memperc
