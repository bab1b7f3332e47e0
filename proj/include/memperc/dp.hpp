#pragma once

// Bond directed percolation on a D-dimensional cone lattice: expected
// permeable and absorbing path counts, their closed-form approximations, the
// permeable ratio r(D, p), and a Monte-Carlo oracle on explicit small
// lattices.
//
// Counts grow like (Dp)^T, so everything analytic is carried in log space.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memperc/random.hpp"
#include "memperc/special_functions.hpp"

namespace memperc {

/// A real number stored as sign and log-magnitude.
struct LogValue {
  double log_mag = kNegInf;
  int sign = 0;  // -1, 0, +1

  static LogValue zero() noexcept { return {}; }
  static LogValue from_log(double log_mag) noexcept {
    if (log_mag == kNegInf) return {};
    return {log_mag, 1};
  }
  static LogValue from(double v) noexcept {
    if (v == 0.0) return {};
    return {std::log(std::abs(v)), v > 0 ? 1 : -1};
  }

  bool is_zero() const noexcept { return sign == 0; }
  double value() const noexcept {
    return sign == 0 ? 0.0 : sign * std::exp(log_mag);
  }

  friend LogValue operator*(LogValue a, LogValue b) noexcept {
    if (a.sign == 0 || b.sign == 0) return {};
    return {a.log_mag + b.log_mag, a.sign * b.sign};
  }
  friend LogValue operator+(LogValue a, LogValue b) noexcept {
    if (a.sign == 0) return b;
    if (b.sign == 0) return a;
    if (a.sign == b.sign) return {log_add_exp(a.log_mag, b.log_mag), a.sign};
    const bool a_big = a.log_mag >= b.log_mag;
    const LogValue& big = a_big ? a : b;
    const LogValue& small = a_big ? b : a;
    if (big.log_mag == small.log_mag) return {};
    return {big.log_mag + std::log1p(-std::exp(small.log_mag - big.log_mag)),
            big.sign};
  }
};

struct DpParams {
  double dim = 2.0;         // D
  std::uint64_t depth = 1;  // T, steps from base to apex
  double prob = 0.5;        // p

  /// T = D - 1, the depth used throughout the closed forms.
  static DpParams with_default_depth(double dim, double prob) {
    if (!(dim >= 2.0)) throw std::domain_error("lattice dimension must be >= 2");
    return {dim, static_cast<std::uint64_t>(std::llround(dim - 1.0)), prob};
  }

  void validate() const {
    if (!(dim >= 1.0) || !std::isfinite(dim)) {
      throw std::domain_error("lattice dimension must be >= 1");
    }
    if (!(prob >= 0.0 && prob <= 1.0)) {
      throw std::domain_error("percolation probability must lie in [0, 1]");
    }
  }
};

/// Expected number of permeable paths, (Dp)^T.
inline LogValue expected_permeable(const DpParams& params) {
  params.validate();
  if (params.depth == 0) return LogValue::from(1.0);
  const double dp = params.dim * params.prob;
  if (dp == 0.0) return LogValue::zero();
  return LogValue::from_log(static_cast<double>(params.depth) * std::log(dp));
}

/// Expected number of absorbing paths under the hyperpyramid site count,
///   (1-p)^D sum_{i=0}^{T-1} (T+1-i)^{D-1} / (D-1)! (Dp)^i,
/// summed exactly term by term in log space.
inline LogValue expected_absorbing_sum(const DpParams& params) {
  params.validate();
  if (params.dim < 2.0) throw std::domain_error("need D >= 2");
  if (params.depth < 1) throw std::domain_error("need T >= 1");
  if (params.prob == 1.0) return LogValue::zero();
  const double d = params.dim;
  const double t = static_cast<double>(params.depth);
  const double log_dp = params.prob > 0.0 ? std::log(d * params.prob) : kNegInf;
  const double prefix = d * std::log1p(-params.prob) - std::lgamma(d);

  double acc = kNegInf;
  for (std::uint64_t i = 0; i < params.depth; ++i) {
    const double fi = static_cast<double>(i);
    const double power = i == 0 ? 0.0 : fi * log_dp;
    if (power == kNegInf) break;
    acc = log_add_exp(acc, (d - 1.0) * std::log(t + 1.0 - fi) + power);
  }
  return LogValue::from_log(prefix + acc);
}

enum class ClosedForm { gamma, erfc };

inline std::string_view closed_form_name(ClosedForm f) noexcept {
  return f == ClosedForm::gamma ? "gamma" : "erfc";
}

/// Integral approximation of the absorbing count (valid for Dp > 1).
///   gamma: (Dp)^{T+1} / (D-1)! ((1-p)/ln Dp)^D gamma(D, (T+1) ln Dp)
///   erfc:  (Dp)^{T+1} / 2 ((1-p)/ln Dp)^D
///              erfc((D - (T+1) ln Dp) / sqrt(2 (T+1) ln Dp))
/// With T + 1 = D the erfc argument is sqrt(D)(1 - ln Dp)/sqrt(2 ln Dp).
inline LogValue expected_absorbing_closed(const DpParams& params,
                                          ClosedForm form) {
  params.validate();
  const double d = params.dim;
  const double dp = d * params.prob;
  if (!(dp > 1.0)) throw std::domain_error("closed form requires Dp > 1");
  if (params.prob == 1.0) return LogValue::zero();
  const double l = std::log(dp);
  const double t1 = static_cast<double>(params.depth) + 1.0;
  const double head = t1 * l + d * (std::log1p(-params.prob) - std::log(l));
  if (form == ClosedForm::gamma) {
    return LogValue::from_log(head - std::lgamma(d) + log_lower_gamma(d, t1 * l));
  }
  const double arg = (d - t1 * l) / std::sqrt(2.0 * t1 * l);
  return LogValue::from_log(head - std::numbers::ln2 + log_erfc(arg));
}

/// r = 1 / (1 + n_a / n_p) with n_a from the erfc closed form and T = D - 1:
///   r = 1 / (1 + 1/2 Dp ((1-p)/ln Dp)^D erfc(sqrt(D)(1 - ln Dp)/sqrt(2 ln Dp)))
inline double permeable_ratio(double dim, double prob) {
  if (!(dim >= 1.0)) throw std::domain_error("lattice dimension must be >= 1");
  if (!(prob >= 0.0 && prob <= 1.0)) {
    throw std::domain_error("percolation probability must lie in [0, 1]");
  }
  const double dp = dim * prob;
  if (!(dp > 1.0)) throw std::domain_error("permeable ratio requires Dp > 1");
  if (prob == 1.0) return 1.0;
  const double l = std::log(dp);
  const double z = l + dim * (std::log1p(-prob) - std::log(l)) -
                   std::numbers::ln2 +
                   log_erfc(std::sqrt(dim) * (1.0 - l) / std::sqrt(2.0 * l));
  return logistic_of_neg(z);
}

/// Ratio from explicit permeable/absorbing counts.
inline double ratio_from_counts(LogValue permeable, LogValue absorbing) {
  if (permeable.is_zero() && absorbing.is_zero()) {
    throw std::domain_error("ratio undefined with no paths");
  }
  if (permeable.is_zero()) return 0.0;
  if (absorbing.is_zero()) return 1.0;
  return logistic_of_neg(absorbing.log_mag - permeable.log_mag);
}

/// First-order expansion around p = (e + delta)/D:
///   r = 1 / (1 + 1/2 exp(1 - e - delta - D delta / e) erfc(-sqrt(D/2) delta / e))
inline double ratio_near_transition(double dim, double delta) {
  constexpr double e = std::numbers::e;
  const double z = 1.0 - e - delta - dim * delta / e - std::numbers::ln2 +
                   log_erfc(-std::sqrt(dim / 2.0) * delta / e);
  return logistic_of_neg(z);
}

// ---------------------------------------------------------------------------
// Truncated exponential series

/// g(k, x) = x^k / k! e^{-x}, a Poisson weight.
inline double poisson_term(std::uint64_t k, double x) {
  const double fk = static_cast<double>(k);
  return std::exp(fk * std::log(x) - std::lgamma(fk + 1.0) - x);
}

struct TruncatedExpRatio {
  double exact = 0.0;   // e_n(x) e^{-x}
  double approx = 0.0;  // Phi((n - x) / sqrt(x))
};

/// e_n(x) e^{-x} with e_n(x) = sum_{k<=n} x^k/k!, and its normal
/// approximation. One minus `exact` is the absorbed fraction of the closed
/// form's erfc reduction.
inline TruncatedExpRatio truncated_exp_ratio(std::uint64_t n, double x) {
  if (!(x > 0.0)) throw std::domain_error("truncated_exp_ratio needs x > 0");
  const double lx = std::log(x);
  double log_term = -x;
  double log_sum = log_term;
  for (std::uint64_t k = 1; k <= n; ++k) {
    log_term += lx - std::log(static_cast<double>(k));
    log_sum = log_add_exp(log_sum, log_term);
  }
  TruncatedExpRatio out;
  out.exact = std::min(1.0, std::exp(log_sum));
  out.approx = normal_cdf((static_cast<double>(n) - x) / std::sqrt(x));
  return out;
}

// ---------------------------------------------------------------------------
// Cone lattice

/// Explicit cone lattice. Level i (0 = base) holds the sites a in N^D with
/// sum(a) = T - i; a site's successors decrement one nonzero coordinate, so
/// interior sites have D outgoing bonds and boundary sites fewer. The apex
/// is the single site at level T.
class ConeLattice {
 public:
  ConeLattice(unsigned dim, unsigned depth, std::size_t max_bonds = 20'000'000)
      : dim_(dim), depth_(depth) {
    if (dim < 2) throw std::domain_error("cone lattice needs D >= 2");
    if (depth < 1) throw std::domain_error("cone lattice needs T >= 1");
    // Site count at level i is C(T - i + D - 1, D - 1).
    double bonds = 0.0;
    for (unsigned i = 0; i < depth; ++i) {
      bonds += dim * std::exp(std::lgamma(depth - i + dim) - std::lgamma(dim) -
                              std::lgamma(depth - i + 1.0));
    }
    if (bonds > static_cast<double>(max_bonds)) {
      throw std::length_error("cone lattice with " + std::to_string(bonds) +
                              " bonds exceeds the memory cap");
    }

    levels_.resize(depth + 1);
    std::vector<unsigned> a(dim, 0);
    enumerate(a, 0, depth, levels_[0]);
    for (unsigned i = 1; i <= depth; ++i) {
      std::map<std::vector<unsigned>, std::uint32_t> index;
      std::vector<std::vector<unsigned>> next;
      auto& cur = levels_[i - 1];
      cur.succ_offset.push_back(0);
      for (const auto& site : cur.sites) {
        for (unsigned j = 0; j < dim; ++j) {
          if (site[j] == 0) continue;
          auto s = site;
          --s[j];
          auto [it, fresh] =
              index.emplace(s, static_cast<std::uint32_t>(next.size()));
          if (fresh) next.push_back(s);
          cur.succ.push_back(it->second);
        }
        cur.succ_offset.push_back(static_cast<std::uint32_t>(cur.succ.size()));
      }
      levels_[i].sites = std::move(next);
    }
    levels_[depth].succ_offset.assign(levels_[depth].sites.size() + 1, 0);
  }

  unsigned dim() const noexcept { return dim_; }
  unsigned depth() const noexcept { return depth_; }
  std::size_t sites_at(unsigned level) const { return levels_.at(level).sites.size(); }
  std::size_t bond_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : levels_) n += l.succ.size();
    return n;
  }

  struct Counts {
    double permeable = 0.0;
    double absorbing = 0.0;
  };

  /// Expected counts by the linear recursion: the expected number of paths
  /// reaching a site is p times the sum over its predecessors, base sites
  /// carry one path each, and a site absorbs with probability (1-p)^outdeg.
  Counts expected(double p) const {
    std::vector<double> cur(levels_[0].sites.size(), 1.0), nxt;
    Counts out;
    for (unsigned i = 0; i < depth_; ++i) {
      const auto& lv = levels_[i];
      nxt.assign(levels_[i + 1].sites.size(), 0.0);
      for (std::size_t s = 0; s < cur.size(); ++s) {
        const auto b = lv.succ_offset[s], e = lv.succ_offset[s + 1];
        out.absorbing += cur[s] * std::pow(1.0 - p, static_cast<double>(e - b));
        for (auto k = b; k < e; ++k) nxt[lv.succ[k]] += p * cur[s];
      }
      cur.swap(nxt);
    }
    out.permeable = cur.empty() ? 0.0 : cur[0];
    return out;
  }

  /// Counts on one sampled bond configuration (each bond present with
  /// probability p).
  Counts sample(double p, Rng& rng) const {
    std::vector<double> cur(levels_[0].sites.size(), 1.0), nxt;
    Counts out;
    for (unsigned i = 0; i < depth_; ++i) {
      const auto& lv = levels_[i];
      nxt.assign(levels_[i + 1].sites.size(), 0.0);
      for (std::size_t s = 0; s < cur.size(); ++s) {
        bool any = false;
        for (auto k = lv.succ_offset[s]; k < lv.succ_offset[s + 1]; ++k) {
          if (uniform01(rng) < p) {
            nxt[lv.succ[k]] += cur[s];
            any = true;
          }
        }
        if (!any) out.absorbing += cur[s];
      }
      cur.swap(nxt);
    }
    out.permeable = cur.empty() ? 0.0 : cur[0];
    return out;
  }

 private:
  struct Level {
    std::vector<std::vector<unsigned>> sites;
    std::vector<std::uint32_t> succ_offset;
    std::vector<std::uint32_t> succ;
  };

  void enumerate(std::vector<unsigned>& a, unsigned j, unsigned remaining,
                 Level& out) {
    if (j + 1 == dim_) {
      a[j] = remaining;
      out.sites.push_back(a);
      return;
    }
    for (unsigned v = 0; v <= remaining; ++v) {
      a[j] = v;
      enumerate(a, j + 1, remaining - v, out);
    }
  }

  unsigned dim_;
  unsigned depth_;
  std::vector<Level> levels_;
};

struct LatticeCounts {
  LogValue permeable;
  LogValue absorbing;
  double ratio() const { return ratio_from_counts(permeable, absorbing); }
};

struct LatticeSimulation {
  unsigned dim = 0;
  unsigned depth = 0;
  double prob = 0.0;
  std::uint64_t trials = 0;
  LatticeCounts sampled;  // trial means
  double se_permeable = 0.0;
  double se_absorbing = 0.0;
  LatticeCounts exact;  // linear-recursion expectation on the same lattice
};

/// Monte-Carlo permeable/absorbing counts on the explicit cone lattice,
/// reported next to the exact expectation on that lattice. Trial t draws
/// from its own seed derived from (seed, t).
inline LatticeSimulation simulate_cone_lattice(unsigned dim, unsigned depth,
                                               double p, std::uint64_t trials,
                                               std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error("percolation probability must lie in [0, 1]");
  }
  if (trials < 2) throw std::invalid_argument("need at least 2 trials");
  const ConeLattice lattice(dim, depth);

  double sum_p = 0, sum_p2 = 0, sum_a = 0, sum_a2 = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, t, 0));
    const auto c = lattice.sample(p, rng);
    sum_p += c.permeable;
    sum_p2 += c.permeable * c.permeable;
    sum_a += c.absorbing;
    sum_a2 += c.absorbing * c.absorbing;
  }
  const double n = static_cast<double>(trials);
  auto se = [n](double s, double s2) {
    const double mean = s / n;
    const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
    return std::sqrt(var / n);
  };

  LatticeSimulation out;
  out.dim = dim;
  out.depth = depth;
  out.prob = p;
  out.trials = trials;
  out.sampled = {LogValue::from(sum_p / n), LogValue::from(sum_a / n)};
  out.se_permeable = se(sum_p, sum_p2);
  out.se_absorbing = se(sum_a, sum_a2);
  const auto ex = lattice.expected(p);
  out.exact = {LogValue::from(ex.permeable), LogValue::from(ex.absorbing)};
  return out;
}

}  // namespace memperc
