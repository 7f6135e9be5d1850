#pragma once

// Bounded-variable primal simplex with a dense, explicitly maintained basis
// inverse. Two phases: artificial variables absorb initial infeasibility,
// then the true objective is minimized. Pricing is Dantzig's rule with a
// switch to Bland's rule after a streak of degenerate pivots, so the method
// terminates on cycling-prone instances without giving up speed elsewhere.
// Every solve ends with a fresh factorization plus one step of iterative
// refinement; reported objectives are then reproducible across callers that
// arrive at the same vertex through different pivot sequences.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "railmpc/program.hpp"

namespace railmpc {

enum class SolveStatus {
  Optimal,
  FeasibleTimeLimit,
  Infeasible,
  Unbounded,
  NumericalFailure,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleTimeLimit: return "feasible-time-limit";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

struct LpOptions {
  double feas_tol = 1e-6;
  double opt_tol = 1e-9;    // reduced-cost tolerance
  double pivot_tol = 1e-9;
  int max_iterations = 0;   // 0: derived from problem size
};

struct LpOutcome {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::vector<double> x;    // structural values; empty unless a point exists
  double objective = 0.0;   // includes the program's objective offset
  int iterations = 0;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Simplex {
 public:
  Simplex(const MixedIntegerProgram& prog, const std::vector<double>& lower,
          const std::vector<double>& upper, const LpOptions& opt)
      : prog_(prog), opt_(opt) {
    m_ = prog.n_rows();
    n_struct_ = prog.n_vars();
    lower_ = lower;
    upper_ = upper;
    cols_.resize(n_struct_);
    for (int i = 0; i < m_; ++i)
      for (const auto& [j, a] : prog.rows[i].terms)
        if (a != 0.0) cols_[j].push_back({i, a});
    rhs_.resize(m_);
    for (int i = 0; i < m_; ++i) rhs_[i] = prog.rows[i].rhs;
    // slack per inequality row
    for (int i = 0; i < m_; ++i) {
      if (prog.rows[i].rel != Relation::LessEqual) continue;
      int j = new_column(0.0, kInf);
      cols_[j].push_back({i, 1.0});
      slack_of_row_[i] = j;
    }
  }

  LpOutcome solve() {
    LpOutcome out;
    if (m_ == 0) return solve_trivial();
    init_basis();
    int cap = opt_.max_iterations > 0 ? opt_.max_iterations
                                      : 2000 + 50 * (m_ + n_total());
    // Phase 1: minimize total artificial value.
    if (has_artificials_) {
      SolveStatus s = iterate(costs_phase1_, cap);
      if (s == SolveStatus::NumericalFailure) return fail(out);
      double infeas = 0.0;
      for (int j : artificials_) infeas += x_[j];
      if (infeas > opt_.feas_tol) {
        out.status = SolveStatus::Infeasible;
        out.iterations = iterations_;
        return out;
      }
      expel_artificials();
    }
    // Phase 2: the real objective.
    std::vector<double> costs(static_cast<std::size_t>(n_total()), 0.0);
    for (int j = 0; j < n_struct_; ++j) costs[j] = prog_.objective[j];
    SolveStatus s = iterate(costs, cap);
    if (s == SolveStatus::NumericalFailure) return fail(out);
    if (s == SolveStatus::Unbounded) {
      out.status = SolveStatus::Unbounded;
      out.iterations = iterations_;
      return out;
    }
    polish();
    if (!residuals_ok()) return fail(out);
    out.status = SolveStatus::Optimal;
    out.x.assign(x_.begin(), x_.begin() + n_struct_);
    out.objective = prog_.objective_value(out.x);
    out.iterations = iterations_;
    return out;
  }

 private:
  enum class VarState : std::uint8_t { Basic, AtLower, AtUpper };

  const MixedIntegerProgram& prog_;
  LpOptions opt_;
  int m_ = 0;
  int n_struct_ = 0;
  std::vector<std::vector<std::pair<int, double>>> cols_;
  std::vector<double> lower_, upper_, rhs_, x_;
  std::vector<VarState> state_;
  std::vector<int> basis_;             // variable index per row
  std::vector<double> binv_;           // m x m row-major
  std::map<int, int> slack_of_row_;
  std::vector<int> artificials_;
  std::vector<double> costs_phase1_;
  bool has_artificials_ = false;
  int iterations_ = 0;
  int degenerate_streak_ = 0;
  bool bland_ = false;

  int n_total() const { return static_cast<int>(cols_.size()); }

  int new_column(double lo, double hi) {
    cols_.emplace_back();
    lower_.push_back(lo);
    upper_.push_back(hi);
    return static_cast<int>(cols_.size()) - 1;
  }

  LpOutcome fail(LpOutcome out) {
    out.status = SolveStatus::NumericalFailure;
    out.iterations = iterations_;
    return out;
  }

  LpOutcome solve_trivial() {
    // No rows: each variable sits at whichever bound its cost prefers.
    LpOutcome out;
    out.x.resize(n_struct_);
    for (int j = 0; j < n_struct_; ++j)
      out.x[j] = prog_.objective[j] >= 0 ? lower_[j] : upper_[j];
    out.status = SolveStatus::Optimal;
    out.objective = prog_.objective_value(out.x);
    return out;
  }

  void init_basis() {
    x_.assign(static_cast<std::size_t>(n_total()), 0.0);
    state_.assign(static_cast<std::size_t>(n_total()), VarState::AtLower);
    for (int j = 0; j < n_total(); ++j) x_[j] = lower_[j];
    basis_.assign(static_cast<std::size_t>(m_), -1);

    std::vector<double> residual = rhs_;
    for (int j = 0; j < n_struct_; ++j) {
      if (x_[j] == 0.0) continue;
      for (const auto& [i, a] : cols_[j]) residual[i] -= a * x_[j];
    }
    for (int i = 0; i < m_; ++i) {
      auto it = slack_of_row_.find(i);
      if (it != slack_of_row_.end() && residual[i] >= 0.0) {
        basis_[i] = it->second;
        x_[it->second] = residual[i];
        state_[it->second] = VarState::Basic;
      } else {
        double sgn = residual[i] >= 0.0 ? 1.0 : -1.0;
        int j = new_column(0.0, kInf);
        cols_[j].push_back({i, sgn});
        x_.push_back(sgn * residual[i]);
        state_.push_back(VarState::Basic);
        basis_[i] = j;
        artificials_.push_back(j);
      }
    }
    has_artificials_ = !artificials_.empty();
    costs_phase1_.assign(static_cast<std::size_t>(n_total()), 0.0);
    for (int j : artificials_) costs_phase1_[j] = 1.0;
    // Basis columns are unit vectors scaled by +-1, so the inverse is their
    // elementwise reciprocal on the diagonal.
    binv_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      double coef = 1.0;
      for (const auto& [r, a] : cols_[basis_[i]])
        if (r == i) coef = a;
      binv_[static_cast<std::size_t>(i) * m_ + i] = 1.0 / coef;
    }
  }

  // One simplex phase. Returns Optimal when no improving column remains.
  SolveStatus iterate(const std::vector<double>& costs, int cap) {
    std::vector<double> y(static_cast<std::size_t>(m_));
    std::vector<double> w(static_cast<std::size_t>(m_));
    int since_refactor = 0;
    while (true) {
      if (iterations_ >= cap) return SolveStatus::NumericalFailure;
      if (since_refactor >= 120) {
        if (!refactorize()) return SolveStatus::NumericalFailure;
        since_refactor = 0;
      }
      // y = c_B' B^-1
      for (int k = 0; k < m_; ++k) {
        double acc = 0.0;
        for (int i = 0; i < m_; ++i)
          acc += costs[basis_[i]] * binv_[static_cast<std::size_t>(i) * m_ + k];
        y[k] = acc;
      }
      int enter = -1;
      double best = 0.0;
      for (int j = 0; j < n_total(); ++j) {
        if (state_[j] == VarState::Basic) continue;
        if (lower_[j] == upper_[j]) continue;  // fixed, cannot move
        double d = costs[j];
        for (const auto& [i, a] : cols_[j]) d -= y[i] * a;
        double viol = 0.0;
        if (state_[j] == VarState::AtLower && d < -opt_.opt_tol) viol = -d;
        if (state_[j] == VarState::AtUpper && d > opt_.opt_tol) viol = d;
        if (viol <= 0.0) continue;
        if (bland_) {
          enter = j;  // lowest eligible index
          break;
        }
        if (viol > best) {
          best = viol;
          enter = j;
        }
      }
      if (enter < 0) return SolveStatus::Optimal;

      // direction through the basis
      for (int i = 0; i < m_; ++i) {
        double acc = 0.0;
        for (const auto& [r, a] : cols_[enter])
          acc += binv_[static_cast<std::size_t>(i) * m_ + r] * a;
        w[i] = acc;
      }
      const double sigma = state_[enter] == VarState::AtLower ? 1.0 : -1.0;
      double t_best = upper_[enter] < kInf ? upper_[enter] - lower_[enter] : kInf;
      int leave_row = -1;  // -1 with finite t_best: bound flip
      for (int i = 0; i < m_; ++i) {
        double delta = sigma * w[i];
        double ratio;
        int jb = basis_[i];
        if (delta > opt_.pivot_tol) {
          ratio = (x_[jb] - lower_[jb]) / delta;
        } else if (delta < -opt_.pivot_tol && upper_[jb] < kInf) {
          ratio = (x_[jb] - upper_[jb]) / delta;
        } else {
          continue;
        }
        if (ratio < 0.0) ratio = 0.0;  // tiny bound overshoot from roundoff
        if (ratio < t_best - 1e-12 ||
            (ratio < t_best + 1e-12 && leave_row >= 0 && jb < basis_[leave_row])) {
          t_best = ratio;
          leave_row = i;
        }
      }
      if (t_best == kInf) return SolveStatus::Unbounded;

      ++iterations_;
      ++since_refactor;
      if (t_best < 1e-10) {
        if (++degenerate_streak_ >= 50) bland_ = true;
      } else {
        degenerate_streak_ = 0;
        bland_ = false;
      }
      for (int i = 0; i < m_; ++i) x_[basis_[i]] -= sigma * w[i] * t_best;
      if (leave_row < 0) {
        // entering variable runs to its opposite bound
        state_[enter] = sigma > 0 ? VarState::AtUpper : VarState::AtLower;
        x_[enter] = sigma > 0 ? upper_[enter] : lower_[enter];
        continue;
      }
      int leave = basis_[leave_row];
      double pivot = w[leave_row];
      x_[enter] = sigma > 0 ? lower_[enter] + t_best : upper_[enter] - t_best;
      state_[enter] = VarState::Basic;
      state_[leave] = sigma * pivot > 0 ? VarState::AtLower : VarState::AtUpper;
      x_[leave] = state_[leave] == VarState::AtLower ? lower_[leave] : upper_[leave];
      basis_[leave_row] = enter;
      // product-form update of the inverse
      double* prow = &binv_[static_cast<std::size_t>(leave_row) * m_];
      double inv_pivot = 1.0 / pivot;
      for (int k = 0; k < m_; ++k) prow[k] *= inv_pivot;
      for (int i = 0; i < m_; ++i) {
        if (i == leave_row) continue;
        double f = w[i];
        if (f == 0.0) continue;
        double* row = &binv_[static_cast<std::size_t>(i) * m_];
        for (int k = 0; k < m_; ++k) row[k] -= f * prow[k];
      }
    }
  }

  // Rebuilds the inverse from the current basis by Gauss-Jordan with partial
  // pivoting and recomputes the basic values. Returns false on a (numerically)
  // singular basis.
  bool refactorize() {
    std::vector<double> mat(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i)
      for (const auto& [r, a] : cols_[basis_[i]])
        mat[static_cast<std::size_t>(r) * m_ + i] = a;
    std::vector<double> inv(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i) inv[static_cast<std::size_t>(i) * m_ + i] = 1.0;
    for (int col = 0; col < m_; ++col) {
      int piv = col;
      double best = std::fabs(mat[static_cast<std::size_t>(col) * m_ + col]);
      for (int r = col + 1; r < m_; ++r) {
        double v = std::fabs(mat[static_cast<std::size_t>(r) * m_ + col]);
        if (v > best) {
          best = v;
          piv = r;
        }
      }
      if (best < 1e-12) return false;
      if (piv != col) {
        for (int k = 0; k < m_; ++k) {
          std::swap(mat[static_cast<std::size_t>(piv) * m_ + k],
                    mat[static_cast<std::size_t>(col) * m_ + k]);
          std::swap(inv[static_cast<std::size_t>(piv) * m_ + k],
                    inv[static_cast<std::size_t>(col) * m_ + k]);
        }
      }
      double p = mat[static_cast<std::size_t>(col) * m_ + col];
      for (int k = 0; k < m_; ++k) {
        mat[static_cast<std::size_t>(col) * m_ + k] /= p;
        inv[static_cast<std::size_t>(col) * m_ + k] /= p;
      }
      for (int r = 0; r < m_; ++r) {
        if (r == col) continue;
        double f = mat[static_cast<std::size_t>(r) * m_ + col];
        if (f == 0.0) continue;
        for (int k = 0; k < m_; ++k) {
          mat[static_cast<std::size_t>(r) * m_ + k] -= f * mat[static_cast<std::size_t>(col) * m_ + k];
          inv[static_cast<std::size_t>(r) * m_ + k] -= f * inv[static_cast<std::size_t>(col) * m_ + k];
        }
      }
    }
    binv_ = std::move(inv);
    recompute_basics();
    return true;
  }

  std::vector<double> reduced_rhs() const {
    std::vector<double> r = rhs_;
    for (int j = 0; j < n_total(); ++j) {
      if (state_[j] == VarState::Basic || x_[j] == 0.0) continue;
      for (const auto& [i, a] : cols_[j]) r[i] -= a * x_[j];
    }
    return r;
  }

  void recompute_basics() {
    std::vector<double> r = reduced_rhs();
    for (int i = 0; i < m_; ++i) {
      double acc = 0.0;
      for (int k = 0; k < m_; ++k) acc += binv_[static_cast<std::size_t>(i) * m_ + k] * r[k];
      x_[basis_[i]] = acc;
    }
  }

  // Replaces zero-valued basic artificials with structural columns where a
  // nonzero pivot exists; rows that admit none are redundant and keep their
  // artificial pinned at zero.
  void expel_artificials() {
    std::vector<bool> is_art(static_cast<std::size_t>(n_total()), false);
    for (int j : artificials_) is_art[j] = true;
    for (int i = 0; i < m_; ++i) {
      if (!is_art[basis_[i]]) continue;
      int found = -1;
      for (int j = 0; j < n_total() && found < 0; ++j) {
        if (is_art[j] || state_[j] == VarState::Basic) continue;
        double piv = 0.0;
        for (const auto& [r, a] : cols_[j])
          piv += binv_[static_cast<std::size_t>(i) * m_ + r] * a;
        if (std::fabs(piv) > 1e-7) found = j;
      }
      if (found < 0) continue;
      // degenerate pivot: swap without moving the solution point
      std::vector<double> w(static_cast<std::size_t>(m_), 0.0);
      for (int r = 0; r < m_; ++r) {
        double acc = 0.0;
        for (const auto& [rr, a] : cols_[found])
          acc += binv_[static_cast<std::size_t>(r) * m_ + rr] * a;
        w[r] = acc;
      }
      int leave = basis_[i];
      state_[found] = VarState::Basic;
      state_[leave] = VarState::AtLower;
      x_[leave] = 0.0;
      basis_[i] = found;
      double* prow = &binv_[static_cast<std::size_t>(i) * m_];
      double inv_pivot = 1.0 / w[i];
      for (int k = 0; k < m_; ++k) prow[k] *= inv_pivot;
      for (int r = 0; r < m_; ++r) {
        if (r == i) continue;
        double f = w[r];
        if (f == 0.0) continue;
        double* row = &binv_[static_cast<std::size_t>(r) * m_];
        for (int k = 0; k < m_; ++k) row[k] -= f * prow[k];
      }
      recompute_basics();
    }
    for (int j : artificials_) upper_[j] = 0.0;  // locked out of phase 2
  }

  // Fresh factorization plus one step of iterative refinement at the final
  // basis; removes pivot-order drift from the reported point.
  void polish() {
    if (!refactorize()) return;
    std::vector<double> resid = reduced_rhs();
    for (int i = 0; i < m_; ++i) {
      int jb = basis_[i];
      double xb = x_[jb];
      if (xb == 0.0) continue;
      for (const auto& [rr, a] : cols_[jb]) resid[rr] -= a * xb;
    }
    for (int i = 0; i < m_; ++i) {
      double corr = 0.0;
      for (int k = 0; k < m_; ++k)
        corr += binv_[static_cast<std::size_t>(i) * m_ + k] * resid[k];
      x_[basis_[i]] += corr;
    }
    // snap basics that drifted marginally outside their bounds
    for (int i = 0; i < m_; ++i) {
      int jb = basis_[i];
      if (x_[jb] < lower_[jb] && x_[jb] > lower_[jb] - opt_.feas_tol) x_[jb] = lower_[jb];
      if (upper_[jb] < kInf && x_[jb] > upper_[jb] && x_[jb] < upper_[jb] + opt_.feas_tol)
        x_[jb] = upper_[jb];
    }
  }

  bool residuals_ok() const {
    double scale = 1.0;
    for (int i = 0; i < m_; ++i) scale = std::max(scale, std::fabs(rhs_[i]));
    std::vector<double> resid = rhs_;
    for (int j = 0; j < n_total(); ++j) {
      if (x_[j] == 0.0) continue;
      for (const auto& [i, a] : cols_[j]) resid[i] -= a * x_[j];
    }
    for (int i = 0; i < m_; ++i)
      if (std::fabs(resid[i]) > 1e-5 * scale) return false;
    return true;
  }
};

}  // namespace detail

// Solves the LP relaxation of `prog` (integrality marks ignored) with the
// given bound vectors, which must cover every structural variable.
inline LpOutcome solve_lp_relaxation(const MixedIntegerProgram& prog,
                                     const std::vector<double>& lower,
                                     const std::vector<double>& upper,
                                     const LpOptions& opt = {}) {
  if (static_cast<int>(lower.size()) != prog.n_vars() ||
      static_cast<int>(upper.size()) != prog.n_vars())
    throw std::invalid_argument("bound vectors must cover every variable");
  for (int j = 0; j < prog.n_vars(); ++j)
    if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]))
      throw std::invalid_argument("finite bounds required on " + prog.variables[j].name);
  detail::Simplex core(prog, lower, upper, opt);
  return core.solve();
}

inline LpOutcome solve_lp_relaxation(const MixedIntegerProgram& prog,
                                     const LpOptions& opt = {}) {
  std::vector<double> lo(prog.n_vars()), hi(prog.n_vars());
  for (int j = 0; j < prog.n_vars(); ++j) {
    lo[j] = prog.variables[j].lower;
    hi[j] = prog.variables[j].upper;
  }
  return solve_lp_relaxation(prog, lo, hi, opt);
}

}  // namespace railmpc
