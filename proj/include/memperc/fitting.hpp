#pragma once

// Curve fits for transition data: logistic A(dt), power laws, and the
// percolation-ratio model with the linear ansatz
//   delta = D p - e = a (1/(N dt) - b).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "memperc/dp.hpp"

namespace memperc {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Bounded Nelder-Mead

template <std::size_t K>
struct SimplexResult {
  std::array<double, K> x{};
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;  // best value after each iteration
};

/// Nelder-Mead over the box [lo, hi]; trial points are projected into the
/// box. Stops when every vertex is within `rel_tol` (relative, with an
/// absolute floor of rel_tol) of the best vertex in each coordinate.
template <std::size_t K, class F>
SimplexResult<K> nelder_mead(F&& f, std::array<double, K> start,
                             std::array<double, K> step,
                             std::array<double, K> lo, std::array<double, K> hi,
                             double rel_tol = 1e-8, int max_iter = 20000) {
  using Point = std::array<double, K>;
  auto project = [&](Point p) {
    for (std::size_t k = 0; k < K; ++k) p[k] = std::clamp(p[k], lo[k], hi[k]);
    return p;
  };
  std::array<Point, K + 1> pts;
  std::array<double, K + 1> val;
  pts[0] = project(start);
  for (std::size_t k = 0; k < K; ++k) {
    Point p = pts[0];
    p[k] += step[k];
    if (p[k] > hi[k]) p[k] = pts[0][k] - step[k];
    pts[k + 1] = project(p);
  }
  for (std::size_t i = 0; i <= K; ++i) val[i] = f(pts[i]);

  SimplexResult<K> res;
  std::array<std::size_t, K + 1> order;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i <= K; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return val[a] < val[b]; });
    const auto best = order[0], worst = order[K], second = order[K - 1];
    res.history.push_back(val[best]);
    res.iterations = it;

    bool small = true;
    for (std::size_t i = 0; i <= K && small; ++i) {
      for (std::size_t k = 0; k < K; ++k) {
        const double scale = std::max(std::abs(pts[best][k]), 1.0);
        if (std::abs(pts[i][k] - pts[best][k]) > rel_tol * scale) {
          small = false;
          break;
        }
      }
    }
    if (small) {
      res.converged = true;
      break;
    }

    Point centroid{};
    for (std::size_t i = 0; i <= K; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < K; ++k) centroid[k] += pts[i][k] / K;
    }
    auto along = [&](double t) {
      Point p;
      for (std::size_t k = 0; k < K; ++k) {
        p[k] = centroid[k] + t * (pts[worst][k] - centroid[k]);
      }
      return project(p);
    };

    const Point xr = along(-1.0);
    const double fr = f(xr);
    if (fr < val[best]) {
      const Point xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        pts[worst] = xe, val[worst] = fe;
      } else {
        pts[worst] = xr, val[worst] = fr;
      }
      continue;
    }
    if (fr < val[second]) {
      pts[worst] = xr, val[worst] = fr;
      continue;
    }
    const bool outside = fr < val[worst];
    const Point xc = along(outside ? -0.5 : 0.5);
    const double fc = f(xc);
    if (fc < (outside ? fr : val[worst])) {
      pts[worst] = xc, val[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= K; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < K; ++k) {
        pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
      }
      pts[i] = project(pts[i]);
      val[i] = f(pts[i]);
    }
  }
  std::size_t b = 0;
  for (std::size_t i = 1; i <= K; ++i) if (val[i] < val[b]) b = i;
  res.x = pts[b];
  res.value = val[b];
  if (res.history.empty() || res.history.back() != res.value) {
    res.history.push_back(res.value);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Logistic fit

struct TransitionPoint {
  double dt = 0.0;
  double A = 0.0;
  double weight = 1.0;
};

/// Weight from a binomial standard error, floored at 0.01.
inline double weight_from_stderr(double stderr_a) {
  const double s = std::max(stderr_a, 0.01);
  return 1.0 / (s * s);
}

struct SigmoidFit {
  double c = 0.0;  // slope (negative for a decreasing A)
  double d = 0.0;  // midpoint, A(d) = 1/2
  double residual = 0.0;
  int iterations = 0;
  std::vector<double> history;

  double operator()(double dt) const {
    return 1.0 / (1.0 + std::exp(-c * (dt - d)));
  }
};

/// Weighted least-squares fit of A = 1 / (1 + exp(-c (dt - d))). Requires
/// at least 4 points with some A > 0.9 and some A < 0.1.
inline SigmoidFit fit_sigmoid(const std::vector<TransitionPoint>& pts) {
  if (pts.size() < 4) throw FitError("sigmoid fit needs at least 4 points");
  const bool has_hi = std::any_of(pts.begin(), pts.end(),
                                  [](const auto& p) { return p.A > 0.9; });
  const bool has_lo = std::any_of(pts.begin(), pts.end(),
                                  [](const auto& p) { return p.A < 0.1; });
  if (!has_hi || !has_lo) throw FitError("no transition bracketed");

  double tmin = pts[0].dt, tmax = pts[0].dt;
  for (const auto& p : pts) tmin = std::min(tmin, p.dt), tmax = std::max(tmax, p.dt);
  const double span = tmax - tmin;
  if (!(span > 0.0)) throw FitError("no transition bracketed");

  auto sse = [&](double c, double d) {
    double s = 0.0;
    for (const auto& p : pts) {
      const double r = p.A - 1.0 / (1.0 + std::exp(-c * (p.dt - d)));
      s += p.weight * r * r;
    }
    return s;
  };

  // Coarse grid: midpoint across the data range, |c| from 1 to 10^4 over
  // the span, both signs.
  double best = std::numeric_limits<double>::infinity(), bc = 0, bd = 0;
  for (int i = 0; i <= 60; ++i) {
    const double d = tmin + span * i / 60.0;
    for (int j = 0; j <= 40; ++j) {
      const double mag = std::pow(10.0, 4.0 * j / 40.0) / span;
      for (double c : {-mag, mag}) {
        const double v = sse(c, d);
        if (v < best) best = v, bc = c, bd = d;
      }
    }
  }

  const double cmax = 1e6 / span;
  auto res = nelder_mead<2>(
      [&](const std::array<double, 2>& x) { return sse(x[0], x[1]); },
      {bc, bd}, {0.1 * std::abs(bc), 0.05 * span}, {-cmax, tmin - span},
      {cmax, tmax + span}, 1e-10);
  if (!res.converged) throw FitError("sigmoid fit did not converge");

  SigmoidFit fit;
  fit.c = res.x[0];
  fit.d = res.x[1];
  fit.residual = res.value;
  fit.iterations = res.iterations;
  fit.history = std::move(res.history);
  return fit;
}

/// dt at which the fitted logistic equals `level`:
///   dt = d + ln(level / (1 - level)) / c.
inline double dt_at_level(const SigmoidFit& fit, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::domain_error("level must lie in (0, 1)");
  }
  if (fit.c == 0.0) throw std::domain_error("flat sigmoid has no inverse");
  return fit.d + std::log(level / (1.0 - level)) / fit.c;
}

// ---------------------------------------------------------------------------
// Power law

struct PowerLawFit {
  double prefactor = 0.0;
  double exponent = 0.0;
  double r_squared = 0.0;

  double operator()(double x) const { return prefactor * std::pow(x, exponent); }
};

/// Least squares on (ln x, ln y).
inline PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& xy) {
  if (xy.size() < 3) throw FitError("power-law fit needs at least 3 points");
  double sx = 0, sy = 0;
  for (const auto& [x, y] : xy) {
    if (!(x > 0.0) || !(y > 0.0)) throw FitError("power-law fit needs positive data");
    sx += std::log(x);
    sy += std::log(y);
  }
  const double n = static_cast<double>(xy.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : xy) {
    const double dx = std::log(x) - mx, dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw FitError("power-law fit needs distinct x values");
  PowerLawFit fit;
  fit.exponent = sxy / sxx;
  fit.prefactor = std::exp(my - fit.exponent * mx);
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

// ---------------------------------------------------------------------------
// Percolation-ratio fit

struct DpFit {
  double a = 5.0;  // fixed ansatz scale
  double b = 0.0;  // offset, 1/(N dt) units
  double D = 0.0;  // lattice dimension
  double residual = 0.0;
  bool at_bound = false;  // optimum sits on the parameter box
};

/// Model A(dt) for one N: r(D, p) with p = (e + a (1/(N dt) - b)) / D.
/// Below Dp = 1 the ratio is taken as 0 and at p >= 1 as 1.
inline double dp_model(double n_vars, double dt, double a, double b, double D) {
  const double delta = a * (1.0 / (n_vars * dt) - b);
  const double dp = std::numbers::e + delta;
  if (!(dp > 1.0)) return 0.0;
  const double p = dp / D;
  if (p >= 1.0) return 1.0;
  return permeable_ratio(D, p);
}

struct DpFitOptions {
  double a = 5.0;
  double ratio = 8.0;  // clause ratio, sets the D cap 10 (1 + 2 ratio) N
};

/// Fits (b, D) for points of a single N. Throws FitError if the data do not
/// span the transition.
inline DpFit fit_dp_ratio(double n_vars, const std::vector<TransitionPoint>& pts,
                          DpFitOptions opt = {}) {
  if (pts.size() < 4) throw FitError("percolation fit needs at least 4 points");
  double amin = 1.0, amax = 0.0;
  for (const auto& p : pts) amin = std::min(amin, p.A), amax = std::max(amax, p.A);
  if (amax - amin < 0.5) throw FitError("insufficient span across the transition");

  const double d_lo = std::numbers::e * (1.0 + 1e-9);
  const double d_hi = 10.0 * (1.0 + 2.0 * opt.ratio) * n_vars;
  const double b_lo = 1e-12, b_hi = 1.0;

  auto sse = [&](double b, double D) {
    double s = 0.0;
    for (const auto& p : pts) {
      const double r = p.A - dp_model(n_vars, p.dt, opt.a, b, D);
      s += p.weight * r * r;
    }
    return s;
  };

  // Grid over log D and b centred on the half-way crossing of the data.
  double best = std::numeric_limits<double>::infinity(), bb = 0, bD = 0;
  const double lo_D = std::log(d_lo), hi_D = std::log(d_hi);
  std::vector<double> b_grid;
  for (int j = 0; j <= 80; ++j) {
    b_grid.push_back(std::pow(10.0, -8.0 + 8.0 * j / 80.0));
  }
  for (const auto& p : pts) b_grid.push_back(std::min(b_hi, 1.0 / (n_vars * p.dt)));
  for (int i = 0; i <= 40; ++i) {
    const double D = std::exp(lo_D + (hi_D - lo_D) * i / 40.0);
    for (double b : b_grid) {
      const double v = sse(b, D);
      if (v < best) best = v, bb = b, bD = D;
    }
  }

  // Refine in (b, ln D).
  auto res = nelder_mead<2>(
      [&](const std::array<double, 2>& x) { return sse(x[0], std::exp(x[1])); },
      {bb, std::log(bD)}, {0.1 * bb, 0.2}, {b_lo, lo_D}, {b_hi, hi_D}, 1e-10);

  DpFit fit;
  fit.a = opt.a;
  fit.b = res.x[0];
  fit.D = std::exp(res.x[1]);
  fit.residual = res.value;
  const auto near = [](double v, double edge) {
    return std::abs(v - edge) <= 1e-6 * std::max(1.0, std::abs(edge));
  };
  fit.at_bound = near(res.x[0], b_lo) || near(res.x[0], b_hi) ||
                 near(res.x[1], lo_D) || near(res.x[1], hi_D);
  return fit;
}

}  // namespace memperc
