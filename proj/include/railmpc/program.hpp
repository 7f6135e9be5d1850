#pragma once

// Linear/mixed-integer program container produced by the builders and
// consumed by the solver. Every variable carries metadata tying it back to
// the model quantity it realizes; every bound is finite for structural
// variables (conservative caps are marked big_m_upper so post-solve checks
// can verify they never bind).

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "railmpc/util.hpp"

namespace railmpc {

enum class Relation { LessEqual, Equal };

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  bool integral = false;
  std::string symbol;         // model symbol: d, tau, h, n, n_before, ...
  int entity = -1;            // platform / route / depot index, per symbol
  int cycle = -1;             // horizon cycle, -1 when not applicable
  bool big_m_upper = false;   // upper bound is a safety cap, not a model bound
};

struct ConstraintRow {
  std::string name;
  std::vector<std::pair<int, double>> terms;  // (variable index, coefficient)
  Relation rel = Relation::LessEqual;
  double rhs = 0.0;
};

struct MixedIntegerProgram {
  std::string name;
  std::vector<Variable> variables;
  std::vector<ConstraintRow> rows;
  std::vector<double> objective;   // aligned with variables
  double objective_offset = 0.0;   // constants absorbed from fixed decisions
  // Model symbols with no variable of their own and how they are realized
  // (eliminated identities, state constants).
  std::map<std::string, std::string> symbol_notes;

  int n_vars() const { return static_cast<int>(variables.size()); }
  int n_rows() const { return static_cast<int>(rows.size()); }

  int add_variable(Variable v) {
    variables.push_back(std::move(v));
    objective.push_back(0.0);
    return n_vars() - 1;
  }

  void add_row(ConstraintRow r) {
    for (const auto& [idx, coef] : r.terms) {
      (void)coef;
      if (idx < 0 || idx >= n_vars())
        throw std::invalid_argument("row " + r.name + " references undeclared variable");
    }
    rows.push_back(std::move(r));
  }

  double objective_value(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != n_vars())
      throw std::invalid_argument("solution dimension mismatch");
    double v = objective_offset;
    for (int j = 0; j < n_vars(); ++j) v += objective[j] * x[j];
    return v;
  }

  int find_variable(const std::string& var_name) const {
    for (int j = 0; j < n_vars(); ++j)
      if (variables[j].name == var_name) return j;
    return -1;
  }

  // LP text format (CPLEX dialect) for cross-checking against external
  // solvers. The constant objective offset is carried as a comment since the
  // format has no slot for it.
  std::string to_lp_format() const;
};

namespace detail {

inline void append_term(std::ostringstream& out, double coef, const std::string& var,
                        bool first) {
  if (coef >= 0 && !first) out << " + ";
  else if (coef < 0) out << (first ? "- " : " - ");
  else if (first) out << "";
  double mag = coef < 0 ? -coef : coef;
  out << format_double(mag) << " " << var;
}

}  // namespace detail

inline std::string MixedIntegerProgram::to_lp_format() const {
  std::ostringstream out;
  out << "\\ Problem: " << (name.empty() ? "railmpc" : name) << "\n";
  out << "\\ Objective offset (add to reported optima): " << format_double(objective_offset)
      << "\n";
  out << "Minimize\n obj:";
  bool first = true;
  for (int j = 0; j < n_vars(); ++j) {
    if (objective[j] == 0.0) continue;
    out << " ";
    detail::append_term(out, objective[j], variables[j].name, first);
    first = false;
  }
  if (first) out << " 0 " << variables.front().name;
  out << "\nSubject To\n";
  for (const auto& row : rows) {
    out << " " << row.name << ":";
    bool f = true;
    for (const auto& [idx, coef] : row.terms) {
      if (coef == 0.0) continue;
      out << " ";
      detail::append_term(out, coef, variables[idx].name, f);
      f = false;
    }
    if (f) out << " 0 " << variables.front().name;
    out << (row.rel == Relation::Equal ? " = " : " <= ") << format_double(row.rhs) << "\n";
  }
  out << "Bounds\n";
  for (const auto& v : variables)
    out << " " << format_double(v.lower) << " <= " << v.name << " <= "
        << format_double(v.upper) << "\n";
  bool any_int = false;
  for (const auto& v : variables) any_int = any_int || v.integral;
  if (any_int) {
    out << "General\n";
    for (const auto& v : variables)
      if (v.integral) out << " " << v.name << "\n";
  }
  out << "End\n";
  return out.str();
}

}  // namespace railmpc
