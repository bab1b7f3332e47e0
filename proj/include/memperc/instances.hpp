#pragma once

// 3-SAT formulas, DIMACS CNF I/O and planted-solution (clause distribution
// control) instance generation.

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "memperc/random.hpp"

namespace memperc {

/// Error raised while reading a DIMACS stream; carries the 1-based line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct Literal {
  std::uint32_t var = 0;  // 0-based
  bool negated = false;

  /// +1 for a plain literal, -1 for a negated one.
  int sign() const noexcept { return negated ? -1 : 1; }
  bool operator==(const Literal&) const = default;
};

struct Clause {
  std::array<Literal, 3> literals{};

  bool operator==(const Clause&) const = default;

  bool has_distinct_vars() const noexcept {
    return literals[0].var != literals[1].var &&
           literals[0].var != literals[2].var &&
           literals[1].var != literals[2].var;
  }
};

struct Formula {
  std::uint32_t n_vars = 0;
  std::vector<Clause> clauses;

  std::size_t n_clauses() const noexcept { return clauses.size(); }
  bool operator==(const Formula&) const = default;

  /// Throws std::invalid_argument if a clause repeats a variable or indexes
  /// past n_vars.
  void validate() const {
    for (std::size_t m = 0; m < clauses.size(); ++m) {
      const auto& c = clauses[m];
      for (const auto& lit : c.literals) {
        if (lit.var >= n_vars) {
          throw std::invalid_argument("clause " + std::to_string(m) +
                                      ": variable index out of range");
        }
      }
      if (!c.has_distinct_vars()) {
        throw std::invalid_argument("clause " + std::to_string(m) +
                                    ": repeated variable");
      }
    }
  }
};

using Assignment = std::vector<bool>;

// ---------------------------------------------------------------------------
// Evaluation

inline bool literal_true(const Literal& lit, const Assignment& a) {
  return a[lit.var] != lit.negated;
}

inline bool clause_satisfied(const Clause& c, const Assignment& a) {
  return literal_true(c.literals[0], a) || literal_true(c.literals[1], a) ||
         literal_true(c.literals[2], a);
}

/// Number of clauses of `f` left unsatisfied by `a`.
inline std::size_t evaluate(const Formula& f, const Assignment& a) {
  if (a.size() != f.n_vars) {
    throw std::invalid_argument("assignment length " +
                                std::to_string(a.size()) +
                                " does not match n_vars " +
                                std::to_string(f.n_vars));
  }
  std::size_t unsat = 0;
  for (const auto& c : f.clauses) unsat += clause_satisfied(c, a) ? 0 : 1;
  return unsat;
}

// ---------------------------------------------------------------------------
// DIMACS

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Reads a 3-CNF in DIMACS format. Comment lines ("c ...") are skipped, a
/// clause may span lines, and a trailing "%" line (SATLIB style) ends input.
inline Formula parse_dimacs(std::istream& in) {
  Formula f;
  bool have_header = false;
  std::size_t declared_clauses = 0;
  std::vector<long long> pending;
  std::size_t clause_line = 0;
  std::string line;
  std::size_t lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == 'c') continue;
    if (t.front() == '%') break;
    if (t.front() == 'p') {
      if (have_header) throw ParseError(lineno, "duplicate header");
      std::istringstream hs{std::string(t)};
      std::string p, fmt;
      long long n = -1, m = -1;
      if (!(hs >> p >> fmt >> n >> m) || p != "p" || fmt != "cnf" || n < 0 ||
          m < 0 || n > 0xffffffffLL) {
        throw ParseError(lineno, "malformed header, expected 'p cnf N M'");
      }
      std::string extra;
      if (hs >> extra) throw ParseError(lineno, "trailing data after header");
      f.n_vars = static_cast<std::uint32_t>(n);
      declared_clauses = static_cast<std::size_t>(m);
      f.clauses.reserve(declared_clauses);
      have_header = true;
      continue;
    }
    if (!have_header) throw ParseError(lineno, "clause before 'p cnf' header");

    std::istringstream ls{std::string(t)};
    std::string tok;
    while (ls >> tok) {
      long long lit = 0;
      try {
        std::size_t used = 0;
        lit = std::stoll(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(lineno, "invalid literal '" + tok + "'");
      }
      if (pending.empty()) clause_line = lineno;
      if (lit != 0) {
        const long long var = lit < 0 ? -lit : lit;
        if (var > static_cast<long long>(f.n_vars)) {
          throw ParseError(lineno, "variable index " + std::to_string(var) +
                                       " out of range");
        }
        pending.push_back(lit);
        continue;
      }
      if (pending.size() != 3) {
        throw ParseError(clause_line, "clause has " +
                                          std::to_string(pending.size()) +
                                          " literals, expected 3");
      }
      Clause c;
      for (std::size_t i = 0; i < 3; ++i) {
        const long long v = pending[i];
        c.literals[i] = Literal{static_cast<std::uint32_t>((v < 0 ? -v : v) - 1),
                                v < 0};
      }
      if (!c.has_distinct_vars()) {
        throw ParseError(clause_line, "repeated variable in clause");
      }
      f.clauses.push_back(c);
      pending.clear();
    }
  }
  if (!have_header) throw ParseError(lineno, "missing 'p cnf' header");
  if (!pending.empty()) {
    throw ParseError(clause_line, "unterminated clause (missing 0)");
  }
  if (f.clauses.size() != declared_clauses) {
    throw ParseError(lineno, "header declares " +
                                 std::to_string(declared_clauses) +
                                 " clauses, found " +
                                 std::to_string(f.clauses.size()));
  }
  return f;
}

inline Formula parse_dimacs(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_dimacs(in);
}

inline void write_dimacs(std::ostream& out, const Formula& f) {
  out << "p cnf " << f.n_vars << ' ' << f.clauses.size() << '\n';
  for (const auto& c : f.clauses) {
    for (const auto& lit : c.literals) {
      out << (lit.negated ? "-" : "") << (lit.var + 1) << ' ';
    }
    out << "0\n";
  }
}

inline std::string write_dimacs(const Formula& f) {
  std::ostringstream out;
  write_dimacs(out, f);
  return out.str();
}

/// Planted assignment sidecar: N space-separated 0/1 values on one line.
inline void write_assignment(std::ostream& out, const Assignment& a) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) out << ' ';
    out << (a[i] ? '1' : '0');
  }
  out << '\n';
}

inline Assignment read_assignment(std::istream& in) {
  Assignment a;
  std::string tok;
  while (in >> tok) {
    if (tok == "0") {
      a.push_back(false);
    } else if (tok == "1") {
      a.push_back(true);
    } else {
      throw std::invalid_argument("assignment token '" + tok +
                                  "' is not 0 or 1");
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Clause distribution control generator

struct CdcParams {
  std::uint32_t n_vars = 0;
  double ratio = 8.0;  // clauses per variable
  double p0 = 0.08;    // weight of a clause with no false literal
  std::uint64_t seed = 0;

  /// Weight of each single-false-literal sign pattern.
  double p1() const noexcept { return (1.0 - 4.0 * p0) / 6.0; }
  /// Weight of each two-false-literal sign pattern.
  double p2() const noexcept { return (1.0 + 2.0 * p0) / 6.0; }

  std::size_t n_clauses() const noexcept {
    return static_cast<std::size_t>(std::llround(ratio * n_vars));
  }

  void validate() const {
    if (!(p0 >= 0.0 && p0 < 0.25)) {
      throw std::invalid_argument("p0 must lie in [0, 0.25)");
    }
    const double a = p1(), b = p2();
    if (!(a >= 0.0 && a <= 1.0) || !(b >= 0.0 && b <= 1.0)) {
      throw std::invalid_argument("derived clause-type probabilities outside [0,1]");
    }
    if (n_vars < 3) throw std::invalid_argument("need at least 3 variables");
    if (!(ratio >= 0.0) || !std::isfinite(ratio)) {
      throw std::invalid_argument("ratio must be a finite non-negative number");
    }
  }
};

struct PlantedInstance {
  Formula formula;
  Assignment planted;
};

/// Number of literals of `c` that are false under `a` (0..3).
inline int false_literal_count(const Clause& c, const Assignment& a) {
  int k = 0;
  for (const auto& lit : c.literals) k += literal_true(lit, a) ? 0 : 1;
  return k;
}

/// Generates a planted 3-SAT instance. The planted assignment is drawn
/// uniformly; each clause picks 3 distinct variables and a false-literal
/// count k with probabilities (p0, 3p1, 3p2), then one of the C(3,k) sign
/// patterns uniformly. Clauses with three false literals are never produced.
inline PlantedInstance generate_cdc(const CdcParams& params) {
  params.validate();
  Rng rng(params.seed);
  const std::uint32_t n = params.n_vars;

  PlantedInstance out;
  out.planted.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) out.planted[i] = (rng() >> 63) != 0;

  const double w0 = params.p0;
  const double w1 = 3.0 * params.p1();
  const std::size_t m = params.n_clauses();
  out.formula.n_vars = n;
  out.formula.clauses.reserve(m);

  for (std::size_t c = 0; c < m; ++c) {
    std::array<std::uint32_t, 3> vars{};
    vars[0] = uniform_index(rng, n);
    do { vars[1] = uniform_index(rng, n); } while (vars[1] == vars[0]);
    do {
      vars[2] = uniform_index(rng, n);
    } while (vars[2] == vars[0] || vars[2] == vars[1]);

    const double u = uniform01(rng);
    const int k = u < w0 ? 0 : (u < w0 + w1 ? 1 : 2);
    // Slots that are false under the planted assignment.
    std::array<bool, 3> is_false{false, false, false};
    if (k == 1) {
      is_false[uniform_index(rng, 3)] = true;
    } else if (k == 2) {
      is_false.fill(true);
      is_false[uniform_index(rng, 3)] = false;
    }

    Clause cl;
    for (int s = 0; s < 3; ++s) {
      // Under the all-TRUE image a false slot is a negated literal; flip the
      // sign back through the planted value.
      const bool planted_value = out.planted[vars[s]];
      cl.literals[s] = Literal{vars[s], planted_value == is_false[s]};
    }
    out.formula.clauses.push_back(cl);
  }
  return out;
}

}  // namespace memperc
