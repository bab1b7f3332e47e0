#pragma once

// Solution trials and the experiment protocols built on them: unsolved-vs-
// steps curves, basin-of-attraction sweeps over dt, and scalability runs at
// a safety-scaled dt.
//
// Every trial is a pure function of (formula, method, dt, budget, seed).
// Trials run on a worker pool and are collected in (instance, replica)
// order, so outputs do not depend on the thread count.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "memperc/dmm.hpp"
#include "memperc/fitting.hpp"
#include "memperc/instances.hpp"
#include "memperc/integrators.hpp"
#include "memperc/random.hpp"

namespace memperc {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The first exception thrown by a job is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

/// 10^5 steps up to N = 1000, growing as N^0.6 beyond.
inline std::uint64_t default_step_budget(std::uint64_t n_vars) {
  if (n_vars <= 1000) return 100000;
  return static_cast<std::uint64_t>(
      std::llround(1e5 * std::pow(static_cast<double>(n_vars) / 1e3, 0.6)));
}

/// v uniform on (-1, 1), x_s = 0.5, x_l = 1.
inline std::vector<double> initial_state(std::size_t n_vars,
                                         std::size_t n_clauses,
                                         std::uint64_t seed) {
  std::vector<double> x(n_vars + 2 * n_clauses);
  Rng rng(seed);
  for (std::size_t i = 0; i < n_vars; ++i) x[i] = uniform_open(rng, -1.0, 1.0);
  std::fill(x.begin() + n_vars, x.begin() + n_vars + n_clauses, 0.5);
  std::fill(x.begin() + n_vars + n_clauses, x.end(), 1.0);
  return x;
}

struct TrialConfig {
  std::shared_ptr<const Formula> formula;
  Method method = Method::euler;
  double dt = 0.1;
  std::uint64_t max_steps = 100000;
  std::uint64_t seed = 0;
  DmmParams dmm_params{};
  std::uint64_t check_interval = 1;
};

struct TrialResult {
  bool solved = false;
  bool diverged = false;
  std::uint64_t steps = 0;
  std::uint64_t fn_evals = 0;
  double wall_time = 0.0;  // seconds; excluded from reproducible outputs

  bool same_outcome(const TrialResult& o) const noexcept {
    return solved == o.solved && diverged == o.diverged && steps == o.steps &&
           fn_evals == o.fn_evals;
  }
};

inline TrialResult run_trial(const TrialConfig& cfg) {
  if (!cfg.formula) throw std::invalid_argument("trial has no formula");
  const auto start = std::chrono::steady_clock::now();
  const DmmSystem sys(*cfg.formula, cfg.dmm_params);
  auto x = initial_state(sys.n_vars(), sys.n_clauses(), cfg.seed);
  const auto tableau = tableau_for(cfg.method);

  TrialResult out;
  try {
    const auto r = integrate(
        sys, [&](std::span<double> s) { sys.clamp(s); },
        [&](std::span<const double> s) { return sys.solved(s); }, x, tableau,
        StepBudget{cfg.dt, cfg.max_steps}, cfg.check_interval);
    out.solved = r.solved;
    out.steps = r.steps;
    out.fn_evals = r.fn_evals;
  } catch (const NonFiniteDerivative&) {
    // A divergent trajectory never reaches a solution.
    out.diverged = true;
    out.steps = cfg.max_steps;
    out.fn_evals = cfg.max_steps * tableau.stages();
  }
  out.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return out;
}

// ---------------------------------------------------------------------------

using InstanceSet = std::vector<std::shared_ptr<const Formula>>;

inline constexpr std::uint64_t kInstanceSeedTag = 0x1257a9ce5eedULL;

/// Seed of the k-th generated instance of a batch.
inline std::uint64_t instance_seed(std::uint64_t base, std::uint64_t k) {
  return derive_seed(base ^ kInstanceSeedTag, k, 0);
}

/// `count` planted instances; instance k uses instance_seed(params.seed, k).
inline InstanceSet generate_instances(CdcParams params, std::size_t count) {
  InstanceSet out;
  out.reserve(count);
  const auto base = params.seed;
  for (std::size_t k = 0; k < count; ++k) {
    params.seed = instance_seed(base, k);
    out.push_back(std::make_shared<const Formula>(generate_cdc(params).formula));
  }
  return out;
}

struct TrialBatch {
  Method method = Method::euler;
  double dt = 0.1;
  std::uint64_t replicas = 10;  // initial conditions per instance
  std::uint64_t max_steps = 100000;
  std::uint64_t base_seed = 0;
  DmmParams dmm_params{};
  unsigned threads = 0;
};

/// All (instance, replica) trials, in that order. Trial (k, r) uses seed
/// derive_seed(base_seed, k, r).
inline std::vector<TrialResult> run_trials(const InstanceSet& instances,
                                           const TrialBatch& batch) {
  const std::size_t total = instances.size() * batch.replicas;
  std::vector<TrialResult> out(total);
  parallel_for(total, batch.threads, [&](std::size_t i) {
    const std::size_t k = i / batch.replicas, r = i % batch.replicas;
    TrialConfig cfg;
    cfg.formula = instances[k];
    cfg.method = batch.method;
    cfg.dt = batch.dt;
    cfg.max_steps = batch.max_steps;
    cfg.seed = derive_seed(batch.base_seed, k, r);
    cfg.dmm_params = batch.dmm_params;
    out[i] = run_trial(cfg);
  });
  return out;
}

/// True if no trial solved within the last 20% of the budget.
inline bool plateau_reached(const std::vector<TrialResult>& trials,
                            std::uint64_t max_steps) {
  const double window_start = 0.8 * static_cast<double>(max_steps);
  return std::none_of(trials.begin(), trials.end(), [&](const auto& t) {
    return t.solved && static_cast<double>(t.steps) > window_start;
  });
}

// ---------------------------------------------------------------------------
// Unsolved count versus steps

struct PlateauCurve {
  std::vector<std::uint64_t> grid;
  std::vector<std::uint64_t> unsolved;      // over all trials
  std::vector<double> instance_mean;        // per-instance unsolved, mean
  std::vector<double> instance_stddev;      // and standard deviation
  std::vector<std::vector<std::uint64_t>> per_instance;  // [instance][grid]
  std::uint64_t trials = 0;
  bool plateau = true;  // no trial solved in the last 20% of the budget
};

/// Trials not solved within s steps, for each s in `grid` (increasing).
inline PlateauCurve plateau_curve(const InstanceSet& instances,
                                  const TrialBatch& batch,
                                  std::vector<std::uint64_t> grid) {
  if (!std::is_sorted(grid.begin(), grid.end()) ||
      std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
    throw std::invalid_argument("plateau grid must be strictly increasing");
  }
  const auto trials = run_trials(instances, batch);
  PlateauCurve pc;
  pc.grid = std::move(grid);
  pc.trials = trials.size();
  pc.plateau = plateau_reached(trials, batch.max_steps);
  const std::size_t g = pc.grid.size();
  pc.per_instance.assign(instances.size(), std::vector<std::uint64_t>(g, 0));
  pc.unsolved.assign(g, 0);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto k = i / batch.replicas;
    for (std::size_t j = 0; j < g; ++j) {
      const bool open = !trials[i].solved || trials[i].steps > pc.grid[j];
      pc.per_instance[k][j] += open;
      pc.unsolved[j] += open;
    }
  }
  pc.instance_mean.assign(g, 0.0);
  pc.instance_stddev.assign(g, 0.0);
  const double ni = static_cast<double>(instances.size());
  for (std::size_t j = 0; j < g; ++j) {
    double s = 0, s2 = 0;
    for (const auto& row : pc.per_instance) {
      s += static_cast<double>(row[j]);
      s2 += static_cast<double>(row[j]) * static_cast<double>(row[j]);
    }
    const double mean = s / ni;
    pc.instance_mean[j] = mean;
    pc.instance_stddev[j] =
        ni > 1 ? std::sqrt(std::max(0.0, (s2 - ni * mean * mean) / (ni - 1.0)))
               : 0.0;
  }
  return pc;
}

// ---------------------------------------------------------------------------
// Basin-of-attraction sweep

struct SweepRow {
  std::uint64_t n_vars = 0;
  double ratio = 0.0;
  Method method = Method::euler;
  double dt = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t solved = 0;
  double A = 0.0;
  double stderr_A = 0.0;
  std::uint64_t diverged = 0;
  std::uint64_t max_steps = 0;
  bool plateau = true;  // false: a trial solved in the last 20% of the budget
};

inline SweepRow summarize_sweep_point(const InstanceSet& instances,
                                      const TrialBatch& batch,
                                      const std::vector<TrialResult>& trials) {
  SweepRow row;
  row.n_vars = instances.empty() ? 0 : instances.front()->n_vars;
  row.ratio = instances.empty() || row.n_vars == 0
                  ? 0.0
                  : static_cast<double>(instances.front()->n_clauses()) /
                        static_cast<double>(row.n_vars);
  row.method = batch.method;
  row.dt = batch.dt;
  row.trials = trials.size();
  for (const auto& t : trials) {
    row.solved += t.solved;
    row.diverged += t.diverged;
  }
  row.A = row.trials ? static_cast<double>(row.solved) / row.trials : 0.0;
  row.stderr_A = row.trials ? std::sqrt(row.A * (1.0 - row.A) / row.trials) : 0.0;
  row.max_steps = batch.max_steps;
  row.plateau = plateau_reached(trials, batch.max_steps);
  return row;
}

/// One row per dt in `grid`, sorted by dt. Every dt reuses the same trial
/// seeds, so rows differ only through dt.
inline std::vector<SweepRow> sweep_dt(const InstanceSet& instances,
                                      TrialBatch batch, std::vector<double> grid) {
  if (grid.empty()) throw std::invalid_argument("empty dt grid");
  for (double dt : grid) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt grid must be positive");
  }
  std::sort(grid.begin(), grid.end());
  std::vector<SweepRow> rows;
  for (double dt : grid) {
    batch.dt = dt;
    rows.push_back(summarize_sweep_point(instances, batch, run_trials(instances, batch)));
  }
  return rows;
}

struct AdaptiveGrid {
  double start = 0.1;
  int points_per_decade = 12;
  double hi_level = 0.95;  // need a row with A above this
  double lo_level = 0.05;  // and one below this
  int max_points = 60;
};

/// Geometric dt grid dt_k = start 10^(k / points_per_decade), extended in
/// both directions from `start` until both shoulders are observed.
inline std::vector<SweepRow> sweep_dt_adaptive(const InstanceSet& instances,
                                               TrialBatch batch,
                                               const AdaptiveGrid& grid) {
  if (!(grid.start > 0.0) || grid.points_per_decade <= 0) {
    throw std::invalid_argument("invalid adaptive grid");
  }
  auto dt_at = [&](int k) {
    return grid.start * std::pow(10.0, static_cast<double>(k) / grid.points_per_decade);
  };
  auto eval = [&](int k) {
    batch.dt = dt_at(k);
    return summarize_sweep_point(instances, batch, run_trials(instances, batch));
  };

  std::vector<SweepRow> rows;
  rows.push_back(eval(0));
  bool seen_hi = rows.back().A > grid.hi_level;
  bool seen_lo = rows.back().A < grid.lo_level;
  // A falls with dt: walk up for the low shoulder, down for the high one.
  for (int k = 1; !seen_lo && static_cast<int>(rows.size()) < grid.max_points; ++k) {
    rows.push_back(eval(k));
    seen_lo = rows.back().A < grid.lo_level;
    seen_hi = seen_hi || rows.back().A > grid.hi_level;
  }
  for (int k = -1; !seen_hi && static_cast<int>(rows.size()) < grid.max_points; --k) {
    rows.push_back(eval(k));
    seen_hi = rows.back().A > grid.hi_level;
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.dt < b.dt; });
  return rows;
}

inline std::vector<TransitionPoint> transition_points(const std::vector<SweepRow>& rows) {
  std::vector<TransitionPoint> pts;
  for (const auto& r : rows) {
    pts.push_back({r.dt, r.A, weight_from_stderr(r.stderr_A)});
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Scalability

/// Smallest step count by which at least fraction q of all trials solved;
/// nullopt if fewer than that solved at all.
inline std::optional<std::uint64_t> solved_percentile(
    const std::vector<TrialResult>& trials, double q) {
  std::vector<std::uint64_t> steps;
  for (const auto& t : trials) if (t.solved) steps.push_back(t.steps);
  const auto need = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(trials.size()) - 1e-9));
  if (need == 0) return 0;
  if (steps.size() < need) return std::nullopt;
  std::nth_element(steps.begin(), steps.begin() + (need - 1), steps.end());
  return steps[need - 1];
}

struct BootstrapEstimate {
  double value = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
};

/// Percentile of solve steps with a bootstrap standard deviation from
/// `resamples` resamples of the trials (with replacement). Resamples where
/// the percentile is undefined are skipped.
inline BootstrapEstimate bootstrap_percentile(const std::vector<TrialResult>& trials,
                                              double q, int resamples,
                                              std::uint64_t seed) {
  BootstrapEstimate est;
  const auto point = solved_percentile(trials, q);
  if (!point) return est;
  est.defined = true;
  est.value = static_cast<double>(*point);
  Rng rng(seed);
  std::vector<TrialResult> sample(trials.size());
  double s = 0, s2 = 0;
  int used = 0;
  for (int b = 0; b < resamples; ++b) {
    for (auto& t : sample) {
      t = trials[uniform_index(rng, static_cast<std::uint32_t>(trials.size()))];
    }
    if (const auto v = solved_percentile(sample, q)) {
      const double x = static_cast<double>(*v);
      s += x;
      s2 += x * x;
      ++used;
    }
  }
  if (used > 1) {
    const double mean = s / used;
    est.std_error = std::sqrt(std::max(0.0, (s2 - used * mean * mean) / (used - 1)));
  }
  return est;
}

struct ScaleRow {
  std::uint64_t n_vars = 0;
  double ratio = 0.0;
  Method method = Method::euler;
  double dt = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t solved = 0;
  std::uint64_t stages = 1;
  BootstrapEstimate steps_p50;
  BootstrapEstimate steps_p90;

  double evals_p50() const { return steps_p50.value * stages; }
  double evals_p90() const { return steps_p90.value * stages; }
  bool complete() const { return steps_p50.defined && steps_p90.defined; }
};

struct ScaleConfig {
  double safety = 0.6;
  int bootstrap_resamples = 1000;
};

/// dt = safety * dt95(N), where dt95 comes from a power-law fit of the dt at
/// which A = 0.95 against N.
inline double safety_dt(const PowerLawFit& dt95_fit, std::uint64_t n_vars,
                        double safety = 0.6) {
  return safety * dt95_fit(static_cast<double>(n_vars));
}

inline ScaleRow scalability_point(const InstanceSet& instances, TrialBatch batch,
                                  const PowerLawFit& dt95_fit,
                                  const ScaleConfig& cfg = {}) {
  if (instances.empty()) throw std::invalid_argument("no instances");
  if (cfg.bootstrap_resamples < 1000) {
    throw std::invalid_argument("bootstrap needs at least 1000 resamples");
  }
  const auto n = instances.front()->n_vars;
  batch.dt = safety_dt(dt95_fit, n, cfg.safety);
  const auto trials = run_trials(instances, batch);

  ScaleRow row;
  row.n_vars = n;
  row.ratio = static_cast<double>(instances.front()->n_clauses()) / n;
  row.method = batch.method;
  row.dt = batch.dt;
  row.trials = trials.size();
  row.stages = tableau_for(batch.method).stages();
  for (const auto& t : trials) row.solved += t.solved;
  const auto seed = derive_seed(batch.base_seed, n, 0xb0075ULL);
  row.steps_p50 = bootstrap_percentile(trials, 0.5, cfg.bootstrap_resamples, seed);
  row.steps_p90 = bootstrap_percentile(trials, 0.9, cfg.bootstrap_resamples, seed + 1);
  return row;
}

}  // namespace memperc
