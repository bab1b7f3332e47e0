#pragma once

// Memcomputing dynamics for 3-SAT: voltages v in [-1,1]^N plus short- and
// long-term memories per clause.
//
//   dv_i    = sum_m  x_l x_s G_{m,i} + (1 + zeta x_l)(1 - x_s) R_{m,i}
//   dx_s,m  = beta (x_s + epsilon)(C_m - gamma)
//   dx_l,m  = alpha (C_m - delta)
//
// with C_m = 1/2 min_i (1 - q_i v_i). States are stored flat as
// [v | x_s | x_l] so the integrators can treat them as plain vectors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "memperc/instances.hpp"

namespace memperc {

struct DmmParams {
  double alpha = 5.0;     // long-term memory rate
  double beta = 20.0;     // short-term memory rate
  double gamma = 0.25;    // short-term threshold
  double delta = 0.05;    // long-term threshold
  double epsilon = 1e-3;  // short-term floor
  double zeta = 0.1;      // rigidity modulation
  double xl_scale = 1e4;  // x_l cap is xl_scale * M

  double xl_max(std::size_t n_clauses) const noexcept {
    return xl_scale * static_cast<double>(n_clauses);
  }

  void validate() const {
    if (!(alpha > 0 && beta > 0 && gamma > 0 && delta > 0 && epsilon > 0 &&
          zeta > 0 && xl_scale > 0)) {
      throw std::invalid_argument("DMM parameters must be positive");
    }
    if (!(gamma > delta)) throw std::invalid_argument("need gamma > delta");
  }
};

/// Flat [v | x_s | x_l] storage shared by states and derivatives.
class PackedDmmVector {
 public:
  PackedDmmVector() = default;
  PackedDmmVector(std::size_t n_vars, std::size_t n_clauses)
      : n_(n_vars), m_(n_clauses), data_(n_vars + 2 * n_clauses, 0.0) {}

  std::size_t n_vars() const noexcept { return n_; }
  std::size_t n_clauses() const noexcept { return m_; }

  std::span<double> v() noexcept { return {data_.data(), n_}; }
  std::span<double> xs() noexcept { return {data_.data() + n_, m_}; }
  std::span<double> xl() noexcept { return {data_.data() + n_ + m_, m_}; }
  std::span<const double> v() const noexcept { return {data_.data(), n_}; }
  std::span<const double> xs() const noexcept { return {data_.data() + n_, m_}; }
  std::span<const double> xl() const noexcept {
    return {data_.data() + n_ + m_, m_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const PackedDmmVector&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<double> data_;
};

struct DmmState : PackedDmmVector {
  using PackedDmmVector::PackedDmmVector;

  bool in_bounds(const DmmParams& p) const noexcept {
    const double cap = p.xl_max(n_clauses());
    for (double x : v()) if (!(x >= -1.0 && x <= 1.0)) return false;
    for (double x : xs()) if (!(x >= 0.0 && x <= 1.0)) return false;
    for (double x : xl()) if (!(x >= 1.0 && x <= cap)) return false;
    return true;
  }
};

struct Derivative : PackedDmmVector {
  using PackedDmmVector::PackedDmmVector;
  std::span<double> dv() noexcept { return v(); }
  std::span<double> dxs() noexcept { return xs(); }
  std::span<double> dxl() noexcept { return xl(); }
  std::span<const double> dv() const noexcept { return v(); }
  std::span<const double> dxs() const noexcept { return xs(); }
  std::span<const double> dxl() const noexcept { return xl(); }
};

// ---------------------------------------------------------------------------
// Per-clause terms. These follow the definitions literally and serve as the
// reference for the vectorised flow below.

namespace detail {

inline std::array<double, 3> literal_terms(std::span<const double> v,
                                           const Clause& c) {
  std::array<double, 3> t{};
  for (int s = 0; s < 3; ++s) {
    t[s] = 1.0 - c.literals[s].sign() * v[c.literals[s].var];
  }
  return t;
}

/// Slot attaining the minimum; ties go to the lowest slot.
inline int argmin3(double t0, double t1, double t2) noexcept {
  int k = 0;
  double best = t0;
  if (t1 < best) { best = t1; k = 1; }
  if (t2 < best) k = 2;
  return k;
}

inline void check_slot(int slot) {
  if (slot < 0 || slot > 2) throw std::out_of_range("clause slot must be 0, 1 or 2");
}

}  // namespace detail

/// C_m = 1/2 min over the clause's literals of (1 - q v).
inline double clause_value(const DmmState& state, const Formula& f,
                           std::size_t m) {
  const auto t = detail::literal_terms(state.v(), f.clauses.at(m));
  return 0.5 * std::min({t[0], t[1], t[2]});
}

/// G_{m,i} = 1/2 q_i min(1 - q_j v_j, 1 - q_k v_k) over the other two slots.
inline double gradient_term(const DmmState& state, const Formula& f,
                            std::size_t m, int slot) {
  detail::check_slot(slot);
  const auto& c = f.clauses.at(m);
  const auto t = detail::literal_terms(state.v(), c);
  const int j = (slot + 1) % 3, k = (slot + 2) % 3;
  return 0.5 * c.literals[slot].sign() * std::min(t[j], t[k]);
}

/// R_{m,i} = 1/2 (q_i - v_i) if slot i attains the clause minimum, else 0.
inline double rigidity_term(const DmmState& state, const Formula& f,
                            std::size_t m, int slot) {
  detail::check_slot(slot);
  const auto& c = f.clauses.at(m);
  const auto t = detail::literal_terms(state.v(), c);
  if (detail::argmin3(t[0], t[1], t[2]) != slot) return 0.0;
  const auto& lit = c.literals[slot];
  return 0.5 * (lit.sign() - state.v()[lit.var]);
}

inline DmmState clamp(DmmState state, const DmmParams& p) {
  const double cap = p.xl_max(state.n_clauses());
  for (double& x : state.v()) x = std::clamp(x, -1.0, 1.0);
  for (double& x : state.xs()) x = std::clamp(x, 0.0, 1.0);
  for (double& x : state.xl()) x = std::clamp(x, 1.0, cap);
  return state;
}

/// y_i = 1 iff v_i > 0.
inline Assignment assignment_from_voltages(std::span<const double> v) {
  Assignment a(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) a[i] = v[i] > 0.0;
  return a;
}

inline Assignment assignment_from_voltages(const DmmState& state) {
  return assignment_from_voltages(state.v());
}

inline bool is_solved(const DmmState& state, const Formula& f) {
  return evaluate(f, assignment_from_voltages(state)) == 0;
}

// ---------------------------------------------------------------------------

/// Formula compiled for fast flow evaluation: literal variables and signs in
/// contiguous per-clause triples. Flow cost is O(M).
class DmmSystem {
 public:
  DmmSystem(const Formula& f, DmmParams params = {})
      : n_(f.n_vars), m_(f.n_clauses()), params_(params),
        xl_max_(params.xl_max(f.n_clauses())) {
    params_.validate();
    f.validate();
    var_.reserve(3 * m_);
    sign_.reserve(3 * m_);
    for (const auto& c : f.clauses) {
      for (const auto& lit : c.literals) {
        var_.push_back(lit.var);
        sign_.push_back(static_cast<double>(lit.sign()));
      }
    }
  }

  std::size_t n_vars() const noexcept { return n_; }
  std::size_t n_clauses() const noexcept { return m_; }
  std::size_t dimension() const noexcept { return n_ + 2 * m_; }
  const DmmParams& params() const noexcept { return params_; }
  double xl_max() const noexcept { return xl_max_; }

  /// Flow field on a flat [v | x_s | x_l] vector. No bounds are assumed, so
  /// this is safe on transient Runge-Kutta stage states.
  void operator()(std::span<const double> x, std::span<double> dx) const {
    const double* v = x.data();
    const double* xs = v + n_;
    const double* xl = xs + m_;
    double* dv = dx.data();
    double* dxs = dv + n_;
    double* dxl = dxs + m_;
    const DmmParams& p = params_;

    std::fill(dv, dv + n_, 0.0);
    const std::uint32_t* var = var_.data();
    const double* q = sign_.data();
    for (std::size_t m = 0; m < m_; ++m, var += 3, q += 3) {
      const double vv[3] = {v[var[0]], v[var[1]], v[var[2]]};
      const double t0 = 1.0 - q[0] * vv[0];
      const double t1 = 1.0 - q[1] * vv[1];
      const double t2 = 1.0 - q[2] * vv[2];
      // Branch-free argmin with ties to the lowest slot.
      const bool first_two = t1 < t0;
      const double m01 = first_two ? t1 : t0;
      const bool last = t2 < m01;
      const int k = last ? 2 : static_cast<int>(first_two);
      const double c = 0.5 * (last ? t2 : m01);

      const double s = xs[m], l = xl[m];
      const double g = 0.5 * l * s;
      const double r = 0.5 * (1.0 + p.zeta * l) * (1.0 - s);
      dv[var[0]] += g * q[0] * std::min(t1, t2);
      dv[var[1]] += g * q[1] * std::min(t0, t2);
      dv[var[2]] += g * q[2] * std::min(t0, t1);
      dv[var[k]] += r * (q[k] - vv[k]);

      dxs[m] = p.beta * (s + p.epsilon) * (c - p.gamma);
      dxl[m] = p.alpha * (c - p.delta);
    }
  }

  /// Projects every component onto its interval.
  void clamp(std::span<double> x) const noexcept {
    double* v = x.data();
    for (std::size_t i = 0; i < n_; ++i) v[i] = std::clamp(v[i], -1.0, 1.0);
    double* xs = v + n_;
    for (std::size_t m = 0; m < m_; ++m) xs[m] = std::clamp(xs[m], 0.0, 1.0);
    double* xl = xs + m_;
    for (std::size_t m = 0; m < m_; ++m) xl[m] = std::clamp(xl[m], 1.0, xl_max_);
  }

  /// True iff the sign pattern of v satisfies every clause.
  bool solved(std::span<const double> x) const noexcept {
    const double* v = x.data();
    const std::uint32_t* var = var_.data();
    const double* q = sign_.data();
    for (std::size_t m = 0; m < m_; ++m, var += 3, q += 3) {
      // Literal true iff (v > 0) matches (q > 0).
      const bool sat = ((v[var[0]] > 0.0) == (q[0] > 0.0)) ||
                       ((v[var[1]] > 0.0) == (q[1] > 0.0)) ||
                       ((v[var[2]] > 0.0) == (q[2] > 0.0));
      if (!sat) return false;
    }
    return true;
  }

  /// Static bound on |dv_i| for in-bounds states: deg(i) (xl_max + 1 + zeta xl_max).
  std::vector<double> dv_bounds() const {
    std::vector<double> b(n_, 0.0);
    const double per = xl_max_ + (1.0 + params_.zeta * xl_max_);
    for (auto idx : var_) b[idx] += per;
    return b;
  }

 private:
  std::size_t n_;
  std::size_t m_;
  DmmParams params_;
  double xl_max_;
  std::vector<std::uint32_t> var_;
  std::vector<double> sign_;
};

/// Flow field of a bounded state. Throws std::domain_error if the state is
/// outside its box.
inline Derivative flow(const DmmState& state, const Formula& f,
                       const DmmParams& params) {
  if (state.n_vars() != f.n_vars || state.n_clauses() != f.n_clauses()) {
    throw std::invalid_argument("state shape does not match formula");
  }
  if (!state.in_bounds(params)) {
    throw std::domain_error("flow evaluated on an out-of-bounds state");
  }
  const DmmSystem sys(f, params);
  Derivative d(state.n_vars(), state.n_clauses());
  sys(state.data(), d.data());
  return d;
}

}  // namespace memperc
