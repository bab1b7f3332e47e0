#pragma once

// Explicit fixed-step Runge-Kutta integration driven by a Butcher tableau:
//
//   k_i     = F(x_n + dt * sum_{j<i} lambda_ij k_j)
//   x_{n+1} = x_n + dt * sum_i omega_i k_i

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace memperc {

struct ButcherTableau {
  std::string name;
  std::vector<double> weights;              // omega, one per stage
  std::vector<std::vector<double>> coeffs;  // lambda, stages x stages

  std::size_t stages() const noexcept { return weights.size(); }

  /// Throws std::invalid_argument unless the weights sum to one and lambda
  /// is strictly lower triangular.
  void validate() const {
    const std::size_t q = stages();
    if (q == 0) throw std::invalid_argument(name + ": tableau has no stages");
    if (coeffs.size() != q) {
      throw std::invalid_argument(name + ": coefficient matrix has wrong size");
    }
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (std::abs(sum - 1.0) > 1e-14) {
      throw std::invalid_argument(name + ": weights do not sum to 1");
    }
    for (std::size_t i = 0; i < q; ++i) {
      if (coeffs[i].size() != q) {
        throw std::invalid_argument(name + ": coefficient matrix has wrong size");
      }
      for (std::size_t j = i; j < q; ++j) {
        if (coeffs[i][j] != 0.0) {
          throw std::invalid_argument(name + ": tableau is not explicit");
        }
      }
    }
  }
};

inline ButcherTableau tableau_euler() {
  return {"euler", {1.0}, {{0.0}}};
}

inline ButcherTableau tableau_trapezoid() {
  return {"trapezoid", {0.5, 0.5}, {{0.0, 0.0}, {1.0, 0.0}}};
}

inline ButcherTableau tableau_rk4() {
  return {"rk4",
          {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0},
          {{0.0, 0.0, 0.0, 0.0},
           {0.5, 0.0, 0.0, 0.0},
           {0.0, 0.5, 0.0, 0.0},
           {0.0, 0.0, 1.0, 0.0}}};
}

enum class Method { euler, trapezoid, rk4 };

inline ButcherTableau tableau_for(Method m) {
  switch (m) {
    case Method::euler: return tableau_euler();
    case Method::trapezoid: return tableau_trapezoid();
    case Method::rk4: return tableau_rk4();
  }
  throw std::invalid_argument("unknown method");
}

inline std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::euler: return "euler";
    case Method::trapezoid: return "trapezoid";
    case Method::rk4: return "rk4";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "euler") return Method::euler;
  if (s == "trapezoid") return Method::trapezoid;
  if (s == "rk4") return Method::rk4;
  throw std::invalid_argument("unknown integration method '" + std::string(s) +
                              "' (expected euler, trapezoid or rk4)");
}

/// A stage produced a NaN or infinite derivative.
class NonFiniteDerivative : public std::runtime_error {
 public:
  explicit NonFiniteDerivative(std::size_t stage)
      : std::runtime_error("non-finite derivative in stage " +
                           std::to_string(stage + 1)),
        stage_(stage) {}
  std::size_t stage() const noexcept { return stage_; }

 private:
  std::size_t stage_;
};

/// Field signature: void(std::span<const double> x, std::span<double> dxdt).
using Field = std::function<void(std::span<const double>, std::span<double>)>;

/// Reusable stage storage for one state dimension and tableau.
class RungeKutta {
 public:
  RungeKutta(ButcherTableau tableau, std::size_t dim)
      : tableau_(std::move(tableau)), dim_(dim),
        k_(tableau_.stages(), std::vector<double>(dim)), stage_(dim) {
    tableau_.validate();
  }

  const ButcherTableau& tableau() const noexcept { return tableau_; }
  std::size_t stages() const noexcept { return tableau_.stages(); }

  /// Advances x in place by one step; exactly stages() field evaluations.
  template <class F>
  void step(F&& field, std::span<double> x, double dt) {
    if (x.size() != dim_) throw std::invalid_argument("state dimension mismatch");
    const std::size_t q = tableau_.stages();
    for (std::size_t i = 0; i < q; ++i) {
      std::span<const double> arg = x;
      if (i > 0) {
        for (std::size_t d = 0; d < dim_; ++d) stage_[d] = x[d];
        for (std::size_t j = 0; j < i; ++j) {
          const double a = dt * tableau_.coeffs[i][j];
          if (a == 0.0) continue;
          const double* kj = k_[j].data();
          for (std::size_t d = 0; d < dim_; ++d) stage_[d] += a * kj[d];
        }
        arg = stage_;
      }
      field(arg, std::span<double>(k_[i]));
      for (double v : k_[i]) {
        if (!std::isfinite(v)) throw NonFiniteDerivative(i);
      }
    }
    for (std::size_t i = 0; i < q; ++i) {
      const double w = dt * tableau_.weights[i];
      const double* ki = k_[i].data();
      for (std::size_t d = 0; d < dim_; ++d) x[d] += w * ki[d];
    }
  }

 private:
  ButcherTableau tableau_;
  std::size_t dim_;
  std::vector<std::vector<double>> k_;
  std::vector<double> stage_;
};

/// One explicit step from x; returns the new state.
template <class F>
std::vector<double> step(F&& field, std::vector<double> x, double dt,
                         const ButcherTableau& tableau) {
  RungeKutta rk(tableau, x.size());
  rk.step(std::forward<F>(field), std::span<double>(x), dt);
  return x;
}

struct StepBudget {
  double dt = 0.1;
  std::uint64_t max_steps = 100000;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw std::invalid_argument("time step must be positive");
    }
    if (max_steps == 0) throw std::invalid_argument("max_steps must be positive");
  }
};

struct IntegrationResult {
  bool solved = false;
  std::uint64_t steps = 0;
  std::uint64_t fn_evals = 0;

  bool operator==(const IntegrationResult&) const = default;
};

/// Repeats step + clamp until `solved(x)` holds or the budget runs out. The
/// predicate is tested on x0, every `check_interval` steps and after the
/// final step. x is left at the final state. Throws NonFiniteDerivative.
template <class F, class Clamp, class Solved>
IntegrationResult integrate(F&& field, Clamp&& clamp, Solved&& solved,
                            std::vector<double>& x, const ButcherTableau& tableau,
                            const StepBudget& budget,
                            std::uint64_t check_interval = 1) {
  budget.validate();
  if (check_interval == 0) throw std::invalid_argument("check_interval must be positive");
  IntegrationResult res;
  if (solved(std::span<const double>(x))) {
    res.solved = true;
    return res;
  }
  RungeKutta rk(tableau, x.size());
  const std::uint64_t q = rk.stages();
  std::span<double> xs(x);
  for (std::uint64_t n = 1; n <= budget.max_steps; ++n) {
    rk.step(field, xs, budget.dt);
    clamp(xs);
    res.steps = n;
    res.fn_evals = n * q;
    if (n % check_interval == 0 || n == budget.max_steps) {
      if (solved(std::span<const double>(x))) {
        res.solved = true;
        return res;
      }
    }
  }
  return res;
}

}  // namespace memperc
