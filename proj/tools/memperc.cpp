// memperc: command-line front end for instance generation, DMM trials,
// dt sweeps, fits and the percolation model.
//
// Every table-producing command writes <out>.manifest.json next to its CSV.
// `memperc replay --manifest FILE` re-runs the recorded command and checks
// that the CSVs come out byte-identical.

#include "memperc/dp.hpp"
#include "memperc/fitting.hpp"
#include "memperc/harness.hpp"
#include "memperc/instances.hpp"
#include "memperc/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#ifndef MEMPERC_VERSION
#define MEMPERC_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace memperc;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReplayMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Option recording

/// Registers options and remembers how to read back their resolved values,
/// so a run can be written to and rebuilt from a manifest.
class Recorder {
 public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& name, T& var,
                      const std::string& desc, bool is_output = false) {
    items_.push_back({name, [&var] { return json(var); }, is_output});
    return app->add_option("--" + name, var, desc)->capture_default_str();
  }
  CLI::Option* flag(CLI::App* app, const std::string& name, bool& var,
                    const std::string& desc) {
    items_.push_back({name, [&var] { return json(var); }, false});
    return app->add_flag("--" + name, var, desc);
  }

  json values() const {
    json j = json::object();
    for (const auto& it : items_) j[it.name] = it.get();
    return j;
  }
  std::vector<std::string> output_names() const {
    std::vector<std::string> names;
    for (const auto& it : items_) {
      if (it.is_output) names.push_back(it.name);
    }
    return names;
  }

 private:
  struct Item {
    std::string name;
    std::function<json()> get;
    bool is_output;
  };
  std::vector<Item> items_;
};

std::vector<std::string> json_to_args(const json& params) {
  std::vector<std::string> args;
  auto token = [](const json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  for (const auto& [name, v] : params.items()) {
    if (v.is_null()) continue;  // unset numeric option (NaN)
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back("--" + name);
      continue;
    }
    if (v.is_array()) {
      if (v.empty()) continue;
      args.push_back("--" + name);
      for (const auto& e : v) args.push_back(token(e));
      continue;
    }
    if (v.is_string() && v.get<std::string>().empty()) continue;
    args.push_back("--" + name);
    args.push_back(token(v));
  }
  return args;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Run context

struct RunOptions {
  bool replay = false;            // ignore MEMPERC_SEED
  std::optional<unsigned> threads;  // overrides --threads
  std::optional<fs::path> out_dir;  // redirects every output path
};

struct Context {
  const Recorder* rec = nullptr;
  unsigned threads = 0;
  std::vector<std::string> command;  // subcommand path, e.g. {"dp", "eval"}
  std::vector<std::pair<std::string, std::string>> inputs;   // path, digest
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;

  void add_input(const fs::path& p) { inputs.push_back({p.string(), file_digest(p.string())}); }

  void write_manifest(const std::string& primary) const {
    json m;
    m["tool"] = "memperc";
    m["tool_version"] = MEMPERC_VERSION;
    m["timestamp"] = utc_timestamp();
    m["command"] = command;
    m["parameters"] = rec ? rec->values() : json::object();
    m["output_parameters"] = rec ? rec->output_names() : std::vector<std::string>{};
    if (seed) m["base_seed"] = *seed;
    m["threads"] = threads;
    m["inputs"] = json::array();
    for (const auto& [p, d] : inputs) m["inputs"].push_back({{"path", p}, {"digest", d}});
    m["outputs"] = json::array();
    for (const auto& p : outputs) {
      m["outputs"].push_back({{"path", p}, {"digest", file_digest(p)}});
    }
    std::ofstream f(primary + ".manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest for " + primary);
    f << m.dump(2) << '\n';
  }
};

std::ofstream open_output(Context& ctx, const std::string& path) {
  if (path.empty()) throw UsageError("--out is required");
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  ctx.outputs.push_back(path);
  return f;
}

// ---------------------------------------------------------------------------
// Instances

std::string instance_stem(std::uint64_t n, double ratio, std::uint64_t seed,
                          std::uint64_t k) {
  return "cdc_N" + std::to_string(n) + "_r" + format_double(ratio) + "_s" +
         std::to_string(seed) + "_" + std::to_string(k);
}

/// Instance options shared by plateau, sweep and scale.
struct InstanceOptions {
  std::string dir;
  std::vector<std::uint64_t> n{100};
  double ratio = 8.0;
  double p0 = 0.08;
  std::uint64_t count = 10;

  void add(CLI::App* app, Recorder& rec) {
    rec.option(app, "instances", dir, "Directory of DIMACS instances (overrides generation)")
        ->check(CLI::ExistingDirectory);
    rec.option(app, "n", n, "Variable counts to generate")->expected(1, -1);
    rec.option(app, "ratio", ratio, "Clause-to-variable ratio");
    rec.option(app, "p0", p0, "CDC weight of clauses with no false literal");
    rec.option(app, "count", count, "Instances per variable count");
  }

  /// Instance sets keyed by N.
  std::map<std::uint64_t, InstanceSet> load(Context& ctx, std::uint64_t seed) const {
    std::map<std::uint64_t, InstanceSet> sets;
    if (!dir.empty()) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".cnf") files.push_back(e.path());
      }
      // Shorter names first so that _2 sorts before _10.
      std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        const auto sa = a.filename().string(), sb = b.filename().string();
        return sa.size() != sb.size() ? sa.size() < sb.size() : sa < sb;
      });
      if (files.empty()) throw UsageError("no .cnf files in " + dir);
      for (const auto& f : files) {
        std::ifstream in(f);
        auto formula = std::make_shared<const Formula>(parse_dimacs(in));
        ctx.add_input(f);
        sets[formula->n_vars].push_back(std::move(formula));
      }
      return sets;
    }
    if (n.empty()) throw UsageError("--n needs at least one value");
    if (count == 0) throw UsageError("--count must be positive");
    for (auto nv : n) {
      if (nv < 3 || nv > 0xffffffffULL) throw UsageError("--n out of range");
      sets[nv] = generate_instances({static_cast<std::uint32_t>(nv), ratio, p0, seed}, count);
    }
    return sets;
  }
};

/// Trial options shared by plateau, sweep and scale.
struct TrialOptions {
  std::string method = "euler";
  std::uint64_t replicas = 10;
  std::uint64_t max_steps = 0;

  void add(CLI::App* app, Recorder& rec) {
    rec.option(app, "method", method, "Integration method")
        ->check(CLI::IsMember({"euler", "trapezoid", "rk4"}));
    rec.option(app, "replicas", replicas, "Initial conditions per instance");
    rec.option(app, "max-steps", max_steps, "Step budget (0 = size-dependent default)");
  }

  TrialBatch batch(std::uint64_t n_vars, std::uint64_t seed, unsigned threads) const {
    if (replicas == 0) throw UsageError("--replicas must be positive");
    TrialBatch b;
    b.method = parse_method(method);
    b.replicas = replicas;
    b.max_steps = max_steps ? max_steps : default_step_budget(n_vars);
    b.base_seed = seed;
    b.threads = threads;
    return b;
  }
};

double formula_ratio(const InstanceSet& set) {
  return static_cast<double>(set.front()->n_clauses()) / set.front()->n_vars;
}

// ---------------------------------------------------------------------------
// Commands

struct Command {
  virtual ~Command() = default;
  virtual void run(Context& ctx) = 0;
  Recorder rec;
  std::uint64_t seed = 1;
  std::string out;
  bool uses_seed = true;
};

struct GenCommand : Command {
  std::uint64_t n = 100;
  double ratio = 8.0;
  double p0 = 0.08;
  std::uint64_t count = 1;
  std::string out_dir = ".";

  void add(CLI::App* app, Recorder& rec) {
    rec.option(app, "n", n, "Number of variables");
    rec.option(app, "ratio", ratio, "Clause-to-variable ratio");
    rec.option(app, "p0", p0, "CDC weight of clauses with no false literal");
    rec.option(app, "count", count, "Number of instances");
    rec.option(app, "seed", seed, "Base seed");
    rec.option(app, "out-dir", out_dir, "Output directory", true);
  }

  void run(Context& ctx) override {
    if (n < 3 || n > 0xffffffffULL) throw UsageError("--n out of range");
    fs::create_directories(out_dir);
    const fs::path index = fs::path(out_dir) / "index.csv";
    std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t, std::string>> rows;
    for (std::uint64_t k = 0; k < count; ++k) {
      const auto s = instance_seed(seed, k);
      const auto inst = generate_cdc({static_cast<std::uint32_t>(n), ratio, p0, s});
      const auto stem = instance_stem(n, ratio, seed, k);
      const auto cnf = fs::path(out_dir) / (stem + ".cnf");
      const auto sol = fs::path(out_dir) / (stem + ".sol");
      {
        std::ofstream f = open_output(ctx, cnf.string());
        f << "c CDC planted 3-SAT, N=" << n << " ratio=" << format_double(ratio)
          << " p0=" << format_double(p0) << " seed=" << s << '\n';
        write_dimacs(f, inst.formula);
      }
      {
        std::ofstream f = open_output(ctx, sol.string());
        write_assignment(f, inst.planted);
      }
      rows.emplace_back(cnf.filename().string(), inst.formula.n_clauses(), s,
                        file_digest(cnf.string()));
    }
    {
      std::ofstream f = open_output(ctx, index.string());
      CsvWriter w(f, {"file", "n_vars", "n_clauses", "instance_seed", "digest"});
      for (const auto& [file, m, s, d] : rows) w.row() << file << n << m << s << d;
    }
    ctx.write_manifest(index.string());
  }
};

struct SolveCommand : Command {
  std::string cnf;
  std::string method = "euler";
  double dt = 0.1;
  std::uint64_t max_steps = 0;
  std::uint64_t check_interval = 1;

  void add(CLI::App* app, Recorder& rec) {
    rec.option(app, "cnf", cnf, "DIMACS file")->required()->check(CLI::ExistingFile);
    rec.option(app, "method", method, "Integration method")
        ->check(CLI::IsMember({"euler", "trapezoid", "rk4"}));
    rec.option(app, "dt", dt, "Time step");
    rec.option(app, "max-steps", max_steps, "Step budget (0 = size-dependent default)");
    rec.option(app, "check-interval", check_interval, "Steps between solution checks");
    rec.option(app, "seed", seed, "Initial-condition seed");
  }

  void run(Context&) override {
    std::ifstream in(cnf);
    TrialConfig cfg;
    cfg.formula = std::make_shared<const Formula>(parse_dimacs(in));
    cfg.method = parse_method(method);
    cfg.dt = dt;
    cfg.max_steps = max_steps ? max_steps : default_step_budget(cfg.formula->n_vars);
    cfg.seed = seed;
    cfg.check_interval = check_interval;
    const auto r = run_trial(cfg);
    json j{{"file", cnf},
           {"method", method},
           {"dt", dt},
           {"max_steps", cfg.max_steps},
           {"seed", seed},
           {"solved", r.solved},
           {"diverged", r.diverged},
           {"steps", r.steps},
           {"fn_evals", r.fn_evals},
           {"wall_time", r.wall_time}};
    std::cout << j.dump() << '\n';
  }
};

struct PlateauCommand : Command {
  InstanceOptions inst;
  TrialOptions trial;
  double dt = 0.3;
  std::vector<std::uint64_t> grid;

  void add(CLI::App* app, Recorder& rec) {
    inst.add(app, rec);
    trial.add(app, rec);
    rec.option(app, "dt", dt, "Time step");
    rec.option(app, "grid", grid, "Step counts to report (default: 4 per decade)");
    rec.option(app, "seed", seed, "Base seed");
    rec.option(app, "out", out, "Output CSV", true)->required();
  }

  static std::vector<std::uint64_t> default_grid(std::uint64_t max_steps) {
    std::set<std::uint64_t> g{0, max_steps, static_cast<std::uint64_t>(0.8 * max_steps)};
    for (double s = 1; s < max_steps; s *= std::pow(10.0, 0.25)) {
      g.insert(static_cast<std::uint64_t>(std::llround(s)));
    }
    return {g.begin(), g.end()};
  }

  void run(Context& ctx) override {
    const auto sets = inst.load(ctx, seed);
    std::ofstream f = open_output(ctx, out);
    CsvWriter w(f, {"n_vars", "ratio", "method", "dt", "steps", "trials", "unsolved",
                    "instance_mean", "instance_stddev", "plateau"});
    for (const auto& [n, set] : sets) {
      auto batch = trial.batch(n, seed, ctx.threads);
      batch.dt = dt;
      const auto pc = plateau_curve(set, batch, grid.empty() ? default_grid(batch.max_steps) : grid);
      for (std::size_t j = 0; j < pc.grid.size(); ++j) {
        w.row() << n << formula_ratio(set) << trial.method << dt << pc.grid[j] << pc.trials
                << pc.unsolved[j] << pc.instance_mean[j] << pc.instance_stddev[j] << pc.plateau;
      }
    }
    f.close();
    ctx.write_manifest(out);
  }
};

const std::vector<std::string> kSweepHeader{"n_vars", "ratio", "method", "dt",
                                            "trials", "solved", "A", "stderr_A",
                                            "diverged", "max_steps", "plateau"};

struct SweepCommand : Command {
  InstanceOptions inst;
  TrialOptions trial;
  std::vector<double> dt;
  bool adaptive = false;
  double dt_start = 0.3;
  int points_per_decade = 12;
  int max_points = 60;

  void add(CLI::App* app, Recorder& rec) {
    inst.add(app, rec);
    trial.add(app, rec);
    rec.option(app, "dt", dt, "Explicit dt grid");
    rec.flag(app, "adaptive", adaptive, "Extend a geometric grid until both shoulders are seen");
    rec.option(app, "dt-start", dt_start, "First dt of the adaptive grid");
    rec.option(app, "points-per-decade", points_per_decade, "Adaptive grid density");
    rec.option(app, "max-points", max_points, "Adaptive grid size cap");
    rec.option(app, "seed", seed, "Base seed");
    rec.option(app, "out", out, "Output CSV", true)->required();
  }

  void run(Context& ctx) override {
    if (dt.empty() == !adaptive) throw UsageError("give exactly one of --dt and --adaptive");
    for (double v : dt) {
      if (!(v > 0.0)) throw UsageError("--dt values must be positive");
    }
    const auto sets = inst.load(ctx, seed);
    std::ofstream f = open_output(ctx, out);
    CsvWriter w(f, kSweepHeader);
    for (const auto& [n, set] : sets) {
      const auto batch = trial.batch(n, seed, ctx.threads);
      const auto rows = adaptive ? sweep_dt_adaptive(set, batch,
                                                     {dt_start, points_per_decade, 0.95,
                                                      0.05, max_points})
                                 : sweep_dt(set, batch, dt);
      for (const auto& r : rows) {
        w.row() << r.n_vars << r.ratio << method_name(r.method) << r.dt << r.trials
                << r.solved << r.A << r.stderr_A << r.diverged << r.max_steps << r.plateau;
      }
    }
    f.close();
    ctx.write_manifest(out);
  }
};

struct FitCommand : Command {
  std::string in;
  std::string powerlaw_out;
  bool dp = false;
  double a = 5.0;

  FitCommand() { uses_seed = false; }

  void add(CLI::App* app, Recorder& rec) {
    rec.option(app, "in", in, "Sweep CSV")->required()->check(CLI::ExistingFile);
    rec.option(app, "out", out, "Output CSV", true)->required();
    rec.option(app, "powerlaw-out", powerlaw_out, "Power-law fits of dt_c and dt95 against N", true);
    rec.flag(app, "dp", dp, "Also fit the percolation ratio model");
    rec.option(app, "a", a, "Fixed scale of the dt-to-percolation ansatz");
  }

  void run(Context& ctx) override {
    ctx.add_input(in);
    const auto table = read_csv_file(in);
    for (const auto& col : {"n_vars", "ratio", "method", "dt", "A", "stderr_A"}) {
      if (!table.has_column(col)) throw UsageError(in + " lacks column " + col);
    }
    std::map<std::pair<std::string, std::uint64_t>, std::vector<TransitionPoint>> groups;
    std::map<std::pair<std::string, std::uint64_t>, double> ratios;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto key = std::pair{table.cell(i, "method"),
                                 static_cast<std::uint64_t>(table.number(i, "n_vars"))};
      groups[key].push_back({table.number(i, "dt"), table.number(i, "A"),
                             weight_from_stderr(table.number(i, "stderr_A"))});
      ratios[key] = table.number(i, "ratio");
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, std::vector<std::pair<double, double>>> dtc, dt95;
    {
      std::ofstream f = open_output(ctx, out);
      CsvWriter w(f, {"n_vars", "ratio", "method", "points", "status", "c", "d", "dt_c",
                      "dt95", "residual", "dp_b", "dp_D", "dp_residual", "dp_at_bound"});
      for (const auto& [key, pts] : groups) {
        const auto& [method, n] = key;
        std::string status = "ok";
        SigmoidFit s;
        double c = nan, d = nan, d95 = nan, res = nan;
        try {
          s = fit_sigmoid(pts);
          c = s.c;
          d = s.d;
          d95 = dt_at_level(s, 0.95);
          res = s.residual;
          dtc[method].push_back({static_cast<double>(n), d});
          dt95[method].push_back({static_cast<double>(n), d95});
        } catch (const FitError& e) {
          status = "no_transition";
        }
        double db = nan, dD = nan, dres = nan;
        bool bound = false;
        if (dp) {
          try {
            const auto fit = fit_dp_ratio(static_cast<double>(n), pts, {a, ratios[key]});
            db = fit.b;
            dD = fit.D;
            dres = fit.residual;
            bound = fit.at_bound;
          } catch (const FitError&) {
            if (status == "ok") status = "dp_failed";
          }
        }
        w.row() << n << ratios[key] << method << static_cast<std::uint64_t>(pts.size())
                << status << c << d << d << d95 << res << db << dD << dres << bound;
      }
    }
    if (!powerlaw_out.empty()) {
      std::ofstream f = open_output(ctx, powerlaw_out);
      CsvWriter w(f, {"method", "quantity", "points", "prefactor", "exponent", "r_squared"});
      for (const auto* series : {&dtc, &dt95}) {
        const char* quantity = series == &dtc ? "dt_c" : "dt95";
        for (const auto& [method, xy] : *series) {
          if (xy.size() < 3) continue;
          const auto p = fit_power_law(xy);
          w.row() << method << quantity << static_cast<std::uint64_t>(xy.size())
                  << p.prefactor << p.exponent << p.r_squared;
        }
      }
    }
    ctx.write_manifest(out);
  }
};

struct ScaleCommand : Command {
  InstanceOptions inst;
  TrialOptions trial;
  double prefactor = std::numeric_limits<double>::quiet_NaN();
  double exponent = std::numeric_limits<double>::quiet_NaN();
  std::string fit_csv;
  double safety = 0.6;
  int bootstrap = 1000;

  void add(CLI::App* app, Recorder& rec) {
    inst.add(app, rec);
    trial.add(app, rec);
    rec.option(app, "dt95-prefactor", prefactor, "dt95(N) = prefactor N^exponent");
    rec.option(app, "dt95-exponent", exponent, "dt95(N) = prefactor N^exponent");
    rec.option(app, "fit-csv", fit_csv, "Output of `fit`; dt95 is fitted against N")
        ->check(CLI::ExistingFile);
    rec.option(app, "safety", safety, "dt = safety * dt95(N)");
    rec.option(app, "bootstrap", bootstrap, "Bootstrap resamples (>= 1000)");
    rec.option(app, "seed", seed, "Base seed");
    rec.option(app, "out", out, "Output CSV", true)->required();
  }

  PowerLawFit dt95_law(Context& ctx) const {
    const bool explicit_law = std::isfinite(prefactor) || std::isfinite(exponent);
    if (explicit_law == !fit_csv.empty()) {
      throw UsageError("give either --dt95-prefactor/--dt95-exponent or --fit-csv");
    }
    if (explicit_law) {
      if (!(prefactor > 0.0) || !std::isfinite(exponent)) {
        throw UsageError("--dt95-prefactor and --dt95-exponent are both required");
      }
      return {prefactor, exponent, 1.0};
    }
    ctx.add_input(fit_csv);
    const auto t = read_csv_file(fit_csv);
    std::vector<std::pair<double, double>> xy;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const double v = t.number(i, "dt95");
      if (t.cell(i, "method") == trial.method && std::isfinite(v)) {
        xy.push_back({t.number(i, "n_vars"), v});
      }
    }
    if (xy.size() == 1) return {xy[0].second, 0.0, 1.0};
    if (xy.size() == 2) {
      const double e = std::log(xy[1].second / xy[0].second) / std::log(xy[1].first / xy[0].first);
      return {xy[0].second / std::pow(xy[0].first, e), e, 1.0};
    }
    if (xy.empty()) throw UsageError(fit_csv + " has no dt95 values for " + trial.method);
    return fit_power_law(xy);
  }

  void run(Context& ctx) override {
    const auto law = dt95_law(ctx);
    const auto sets = inst.load(ctx, seed);
    std::ofstream f = open_output(ctx, out);
    CsvWriter w(f, {"n_vars", "ratio", "method", "dt", "trials", "solved", "stages",
                    "steps_p50", "steps_p50_se", "steps_p90", "steps_p90_se",
                    "evals_p50", "evals_p90"});
    for (const auto& [n, set] : sets) {
      const auto row = scalability_point(set, trial.batch(n, seed, ctx.threads), law,
                                         {safety, bootstrap});
      w.row() << row.n_vars << row.ratio << method_name(row.method) << row.dt << row.trials
              << row.solved << row.stages << row.steps_p50.value << row.steps_p50.std_error
              << row.steps_p90.value << row.steps_p90.std_error << row.evals_p50()
              << row.evals_p90();
    }
    f.close();
    ctx.write_manifest(out);
  }
};

struct DpEvalCommand : Command {
  std::vector<double> dims{100, 1000, 10000};
  std::vector<double> p;
  double x_min = 0.8, x_max = 1.3;
  int points = 51;

  DpEvalCommand() { uses_seed = false; }

  void add(CLI::App* app, Recorder& rec) {
    rec.option(app, "D", dims, "Lattice dimensions")->expected(1, -1);
    rec.option(app, "p", p, "Explicit probabilities (otherwise a grid in units of e/D)");
    rec.option(app, "x-min", x_min, "Grid start, p D / e");
    rec.option(app, "x-max", x_max, "Grid end, p D / e");
    rec.option(app, "points", points, "Grid points");
    rec.option(app, "out", out, "Output CSV", true)->required();
  }

  void run(Context& ctx) override {
    if (p.empty() && points < 2) throw UsageError("--points must be at least 2");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    constexpr double e = std::numbers::e;
    std::ofstream f = open_output(ctx, out);
    CsvWriter w(f, {"D", "p", "x", "delta", "r_exact_sum", "r_gamma", "r_erfc",
                    "r_near_transition"});
    for (double d : dims) {
      if (!(d >= 2.0)) throw UsageError("--D values must be >= 2");
      std::vector<double> probs = p;
      if (probs.empty()) {
        for (int i = 0; i < points; ++i) {
          probs.push_back((x_min + (x_max - x_min) * i / (points - 1)) * e / d);
        }
      }
      for (double prob : probs) {
        if (!(prob > 0.0 && prob <= 1.0)) throw UsageError("probabilities must lie in (0, 1]");
        const auto params = DpParams::with_default_depth(d, prob);
        const auto np = expected_permeable(params);
        const double r_sum = ratio_from_counts(np, expected_absorbing_sum(params));
        double r_gamma = nan, r_erfc = nan;
        if (d * prob > 1.0) {
          r_gamma = ratio_from_counts(np, expected_absorbing_closed(params, ClosedForm::gamma));
          r_erfc = permeable_ratio(d, prob);
        }
        const double delta = d * prob - e;
        w.row() << d << prob << d * prob / e << delta << r_sum << r_gamma << r_erfc
                << ratio_near_transition(d, delta);
      }
    }
    f.close();
    ctx.write_manifest(out);
  }
};

struct DpSimCommand : Command {
  unsigned dim = 2;
  unsigned depth = 6;
  std::vector<double> p{0.3, 0.6, 0.9};
  std::uint64_t trials = 10000;

  void add(CLI::App* app, Recorder& rec) {
    rec.option(app, "D", dim, "Lattice dimension");
    rec.option(app, "T", depth, "Lattice depth");
    rec.option(app, "p", p, "Bond probabilities")->expected(1, -1);
    rec.option(app, "trials", trials, "Sampled bond configurations per probability");
    rec.option(app, "seed", seed, "Base seed");
    rec.option(app, "out", out, "Output CSV", true)->required();
  }

  void run(Context& ctx) override {
    std::ofstream f = open_output(ctx, out);
    CsvWriter w(f, {"D", "T", "p", "trials", "permeable_mean", "permeable_se",
                    "permeable_exact", "absorbing_mean", "absorbing_se", "absorbing_exact",
                    "ratio_sampled", "ratio_exact"});
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto s = simulate_cone_lattice(dim, depth, p[i], trials, derive_seed(seed, i, 0));
      auto ratio = [](const LatticeCounts& c) {
        return c.permeable.is_zero() && c.absorbing.is_zero()
                   ? std::numeric_limits<double>::quiet_NaN()
                   : c.ratio();
      };
      w.row() << dim << depth << p[i] << trials << s.sampled.permeable.value()
              << s.se_permeable << s.exact.permeable.value() << s.sampled.absorbing.value()
              << s.se_absorbing << s.exact.absorbing.value() << ratio(s.sampled)
              << ratio(s.exact);
    }
    f.close();
    ctx.write_manifest(out);
  }
};

// ---------------------------------------------------------------------------
// Dispatch

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

int run_cli(const std::vector<std::string>& argv, const RunOptions& opts);

int replay(const std::string& manifest_path, const RunOptions& opts) {
  json m;
  {
    std::ifstream f(manifest_path);
    if (!f) throw UsageError("cannot open " + manifest_path);
    m = json::parse(f);
  }
  auto params = m.at("parameters");
  const auto command = m.at("command").get<std::vector<std::string>>();

  // Recorded inputs must be unchanged.
  for (const auto& in : m.at("inputs")) {
    const auto path = in.at("path").get<std::string>();
    if (file_digest(path) != in.at("digest").get<std::string>()) {
      throw ReplayMismatch("input " + path + " changed since the recorded run");
    }
  }

  std::map<std::string, std::string> redirect;  // recorded path -> new path
  for (const auto& o : m.at("outputs")) {
    const auto path = o.at("path").get<std::string>();
    redirect[path] = opts.out_dir ? (*opts.out_dir / fs::path(path).filename()).string() : path;
  }
  if (opts.out_dir) {
    for (const auto& name : m.at("output_parameters").get<std::vector<std::string>>()) {
      auto& v = params.at(name);
      if (v.get<std::string>().empty()) continue;
      const bool is_dir = name.size() > 4 && name.ends_with("-dir");
      v = is_dir ? opts.out_dir->string()
                 : (*opts.out_dir / fs::path(v.get<std::string>()).filename()).string();
    }
  }

  std::vector<std::string> argv{"memperc"};
  argv.insert(argv.end(), command.begin(), command.end());
  for (auto& a : json_to_args(params)) argv.push_back(std::move(a));
  RunOptions inner = opts;
  inner.replay = true;
  inner.out_dir.reset();
  const int rc = run_cli(argv, inner);
  if (rc != 0) return rc;

  std::size_t mismatches = 0;
  for (const auto& o : m.at("outputs")) {
    const auto recorded = o.at("path").get<std::string>();
    const auto now = redirect.at(recorded);
    const auto digest = file_digest(now);
    const bool same = digest == o.at("digest").get<std::string>();
    mismatches += !same;
    std::cout << (same ? "identical " : "DIFFERENT ") << now << ' ' << digest << '\n';
  }
  if (mismatches) {
    throw ReplayMismatch(std::to_string(mismatches) + " output(s) differ from the manifest");
  }
  return 0;
}

int run_cli(const std::vector<std::string>& argv, const RunOptions& opts) {
  CLI::App app{"Memcomputing DMM trials, dt sweeps and the percolation model", "memperc"};
  app.set_version_flag("--version", MEMPERC_VERSION);
  app.require_subcommand(1);

  Context ctx;
  unsigned threads = 0;
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker threads (0 = all cores); does not change outputs")
        ->capture_default_str();
  };

  GenCommand gen;
  SolveCommand solve;
  PlateauCommand plateau;
  SweepCommand sweep;
  ScaleCommand scale;
  FitCommand fit;
  DpEvalCommand dp_eval;
  DpSimCommand dp_sim;
  std::string manifest;
  std::string replay_out_dir;

  std::vector<std::pair<CLI::App*, Command*>> leaves;
  auto leaf = [&](CLI::App* sub, Command* cmd) {
    add_threads(sub);
    leaves.push_back({sub, cmd});
  };
  auto* g = app.add_subcommand("gen", "Generate planted CDC instances");
  gen.add(g, gen.rec);
  leaf(g, &gen);
  auto* so = app.add_subcommand("solve", "Run one trial on a DIMACS file; JSON to stdout");
  solve.add(so, solve.rec);
  leaf(so, &solve);
  auto* pl = app.add_subcommand("plateau", "Unsolved trials versus integration steps");
  plateau.add(pl, plateau.rec);
  leaf(pl, &plateau);
  auto* sw = app.add_subcommand("sweep", "Fraction of solved trials A over a dt grid");
  sweep.add(sw, sweep.rec);
  leaf(sw, &sweep);
  auto* sc = app.add_subcommand("scale", "Solve-step percentiles at a safety-scaled dt");
  scale.add(sc, scale.rec);
  leaf(sc, &scale);
  auto* fi = app.add_subcommand("fit", "Logistic, power-law and percolation fits of a sweep");
  fit.add(fi, fit.rec);
  leaf(fi, &fit);
  auto* dp = app.add_subcommand("dp", "Directed-percolation model");
  dp->require_subcommand(1);
  auto* de = dp->add_subcommand("eval", "Permeable ratio from the exact sum and closed forms");
  dp_eval.add(de, dp_eval.rec);
  leaf(de, &dp_eval);
  auto* ds = dp->add_subcommand("sim", "Monte Carlo on the explicit cone lattice");
  dp_sim.add(ds, dp_sim.rec);
  leaf(ds, &dp_sim);
  auto* rp = app.add_subcommand("replay", "Re-run a manifest and compare the outputs");
  rp->add_option("--manifest", manifest, "RunManifest JSON")->required()->check(CLI::ExistingFile);
  rp->add_option("--out-dir", replay_out_dir, "Write outputs here instead of the recorded paths");
  add_threads(rp);

  try {
    std::vector<std::string> rev(argv.rbegin(), argv.rend() - 1);
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return 2;
  }

  if (opts.threads) threads = *opts.threads;
  if (rp->parsed()) {
    RunOptions r = opts;
    r.threads = threads;
    if (!replay_out_dir.empty()) r.out_dir = fs::path(replay_out_dir);
    return replay(manifest, r);
  }

  for (auto& [sub, cmd] : leaves) {
    if (!sub->parsed()) continue;
    if (cmd->uses_seed && !opts.replay) {
      if (const char* env = std::getenv("MEMPERC_SEED"); env && *env) {
        try {
          std::size_t used = 0;
          cmd->seed = std::stoull(env, &used, 0);
          if (env[used] != '\0') throw std::invalid_argument(env);
        } catch (const std::exception&) {
          throw UsageError(std::string("MEMPERC_SEED is not an unsigned integer: ") + env);
        }
      }
    }
    ctx.threads = threads;
    ctx.rec = &cmd->rec;
    if (cmd->uses_seed) ctx.seed = cmd->seed;
    for (auto* a = sub; a && a != &app; a = a->get_parent()) {
      ctx.command.insert(ctx.command.begin(), a->get_name());
    }
    cmd->run(ctx);
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(std::vector<std::string>(argv, argv + argc), {});
  } catch (const UsageError& e) {
    print_error("usage", e.what());
    return 2;
  } catch (const ReplayMismatch& e) {
    print_error("replay_mismatch", e.what());
    return 3;
  } catch (const ParseError& e) {
    print_error("parse", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
}
