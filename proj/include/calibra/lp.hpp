#pragma once

// Dense two-phase simplex for
//   maximise c^T x  subject to  A x = b,  x >= 0.
// Phase 1 minimises the sum of artificial variables; artificials left in
// the basis at zero are pivoted out, or their rows dropped as redundant.
// This is the revised form: the basis matrix is LU-factorised afresh at
// every iteration, so basic values and duals never accumulate drift. The
// ratio test is Harris's two-pass rule, which prefers large pivots among
// near-tied rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "calibra/error.hpp"

namespace calibra {

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

inline std::string status_name(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

/// Entering-variable rule. Bland (smallest improving index, smallest basic
/// index among tied rows) never cycles but needs many pivots; Dantzig (most
/// negative reduced cost) is much faster and switches to Bland after a run
/// of degenerate pivots.
enum class PivotRule { bland, dantzig };

struct LpProblem {
  Eigen::VectorXd objective;    // c, maximised
  Eigen::MatrixXd constraints;  // A
  Eigen::VectorXd rhs;          // b

  std::size_t variables() const { return static_cast<std::size_t>(objective.size()); }
  std::size_t rows() const { return static_cast<std::size_t>(rhs.size()); }

  void validate() const {
    if (constraints.rows() != rhs.size() || constraints.cols() != objective.size()) {
      throw ValidationError("LP dimensions disagree: A is " + std::to_string(constraints.rows()) + "x" +
                            std::to_string(constraints.cols()) + ", b has " + std::to_string(rhs.size()) +
                            " entries, c has " + std::to_string(objective.size()));
    }
    if (!constraints.allFinite() || !rhs.allFinite() || !objective.allFinite()) {
      throw ValidationError("LP data contains non-finite values");
    }
  }
};

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  Eigen::VectorXd x;      // primal values (empty unless optimal)
  Eigen::VectorXd duals;  // y with A^T y >= c at optimality (0 for redundant rows)
  double objective = std::nan("");
  std::size_t iterations = 0;
  double primal_residual = std::nan("");  // max |A x - b|
};

struct SimplexOptions {
  PivotRule rule = PivotRule::dantzig;
  std::size_t max_iterations = 200000;
  /// Smallest pivot element accepted in the ratio test.
  double pivot_tol = 1e-11;
  /// Primal feasibility slack used by the ratio test and the phase-1 verdict.
  double feasibility_tol = 1e-9;
  /// Reduced costs above -optimality_tol (scaled by max |c|) count as optimal.
  double optimality_tol = 1e-11;
  /// Consecutive degenerate pivots before Dantzig switches to Bland.
  std::size_t degenerate_run = 50;
};

namespace detail {

class RevisedSimplex {
 public:
  RevisedSimplex(const LpProblem& lp, const SimplexOptions& opt)
      : opt_(opt), n_(lp.constraints.cols()), m0_(lp.constraints.rows()) {
    // Flip rows so b >= 0; the artificial identity is then a feasible basis.
    a_ = Eigen::MatrixXd(m0_, n_ + m0_);
    a_.leftCols(n_) = lp.constraints;
    a_.rightCols(m0_).setIdentity();
    b_ = lp.rhs;
    sign_ = Eigen::VectorXd::Ones(m0_);
    for (Eigen::Index i = 0; i < m0_; ++i) {
      if (b_(i) < 0.0) {
        a_.row(i).head(n_) *= -1.0;
        b_(i) = -b_(i);
        sign_(i) = -1.0;
      }
    }
    c_ = lp.objective;
    for (Eigen::Index i = 0; i < m0_; ++i) {
      rows_.push_back(i);
      basis_.push_back(n_ + i);
    }
    allowed_.assign(static_cast<std::size_t>(n_ + m0_), 1);
    rebuild_rows();
  }

  LpSolution solve() {
    LpSolution sol;
    const Eigen::Index cols = n_ + m0_;

    Eigen::VectorXd cost1 = Eigen::VectorXd::Zero(cols);
    cost1.tail(m0_).setOnes();
    auto st = optimise(cost1);
    sol.iterations = iterations_;
    if (st == LpStatus::iteration_limit) {
      sol.status = st;
      return sol;
    }
    factor();
    double infeas = 0.0;
    for (std::size_t k = 0; k < basis_.size(); ++k) {
      if (basis_[k] >= n_) infeas += std::max(0.0, xb_(static_cast<Eigen::Index>(k)));
    }
    if (infeas > opt_.feasibility_tol * std::max(1.0, b_.lpNorm<Eigen::Infinity>())) {
      sol.status = LpStatus::infeasible;
      return sol;
    }
    drive_out_artificials();
    for (Eigen::Index j = n_; j < cols; ++j) allowed_[static_cast<std::size_t>(j)] = 0;

    Eigen::VectorXd cost2 = Eigen::VectorXd::Zero(cols);
    cost2.head(n_) = -c_;
    st = optimise(cost2);
    sol.iterations = iterations_;
    sol.status = st;
    if (st != LpStatus::optimal) return sol;

    factor();
    sol.x = Eigen::VectorXd::Zero(n_);
    for (std::size_t k = 0; k < basis_.size(); ++k) {
      if (basis_[k] < n_) sol.x(basis_[k]) = std::max(0.0, xb_(static_cast<Eigen::Index>(k)));
    }
    sol.objective = c_.dot(sol.x);
    const Eigen::VectorXd y = lu_.transpose().solve(cost_basis(cost2));
    sol.duals = Eigen::VectorXd::Zero(m0_);
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      sol.duals(rows_[k]) = -y(static_cast<Eigen::Index>(k)) * sign_(rows_[k]);
    }
    return sol;
  }

 private:
  void rebuild_rows() {
    const auto mk = static_cast<Eigen::Index>(rows_.size());
    ak_.resize(mk, a_.cols());
    bk_.resize(mk);
    for (Eigen::Index k = 0; k < mk; ++k) {
      ak_.row(k) = a_.row(rows_[static_cast<std::size_t>(k)]);
      bk_(k) = b_(rows_[static_cast<std::size_t>(k)]);
    }
  }

  void factor() {
    const auto mk = static_cast<Eigen::Index>(rows_.size());
    Eigen::MatrixXd bm(mk, mk);
    for (Eigen::Index k = 0; k < mk; ++k) bm.col(k) = ak_.col(basis_[static_cast<std::size_t>(k)]);
    lu_.compute(bm);
    xb_ = lu_.solve(bk_);
  }

  Eigen::VectorXd cost_basis(const Eigen::VectorXd& cost) const {
    Eigen::VectorXd cb(static_cast<Eigen::Index>(basis_.size()));
    for (std::size_t k = 0; k < basis_.size(); ++k) cb(static_cast<Eigen::Index>(k)) = cost(basis_[k]);
    return cb;
  }

  LpStatus optimise(const Eigen::VectorXd& cost) {
    const double tol = opt_.optimality_tol * std::max(1.0, cost.lpNorm<Eigen::Infinity>());
    std::vector<char> basic(static_cast<std::size_t>(a_.cols()), 0);
    std::size_t degenerate = 0;
    while (true) {
      if (rows_.empty()) return LpStatus::optimal;
      factor();
      std::fill(basic.begin(), basic.end(), 0);
      for (auto j : basis_) basic[static_cast<std::size_t>(j)] = 1;
      const Eigen::VectorXd y = lu_.transpose().solve(cost_basis(cost));
      const Eigen::VectorXd d = cost - ak_.transpose() * y;

      const bool bland = opt_.rule == PivotRule::bland || degenerate >= opt_.degenerate_run;
      Eigen::Index enter = -1;
      double best = -tol;
      for (Eigen::Index j = 0; j < d.size(); ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (!allowed_[ju] || basic[ju] || d(j) >= -tol) continue;
        if (bland) {
          enter = j;
          break;
        }
        if (d(j) < best) {
          best = d(j);
          enter = j;
        }
      }
      if (enter < 0) return LpStatus::optimal;
      if (iterations_ >= opt_.max_iterations) return LpStatus::iteration_limit;

      const Eigen::VectorXd w = lu_.solve(ak_.col(enter));
      const Eigen::Index leave = bland ? ratio_bland(w) : ratio_harris(w);
      if (leave < 0) return LpStatus::unbounded;
      const double step = std::max(0.0, xb_(leave)) / w(leave);
      degenerate = step <= opt_.feasibility_tol ? degenerate + 1 : 0;
      basis_[static_cast<std::size_t>(leave)] = enter;
      ++iterations_;
    }
  }

  // Textbook minimum ratio with ties to the smallest basic index.
  Eigen::Index ratio_bland(const Eigen::VectorXd& w) const {
    Eigen::Index best = -1;
    double best_ratio = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w(i) <= opt_.pivot_tol) continue;
      const double ratio = std::max(0.0, xb_(i)) / w(i);
      if (best < 0) {
        best = i;
        best_ratio = ratio;
        continue;
      }
      const double slack = 1e-12 * std::max(1.0, best_ratio);
      if (ratio < best_ratio - slack ||
          (ratio <= best_ratio + slack && basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(best)])) {
        best_ratio = std::min(best_ratio, ratio);
        best = i;
      }
    }
    return best;
  }

  // Harris: bound the step using relaxed bounds, then take the largest
  // pivot among rows whose exact ratio fits under that bound.
  Eigen::Index ratio_harris(const Eigen::VectorXd& w) const {
    double bound = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w(i) <= opt_.pivot_tol) continue;
      bound = std::min(bound, (std::max(0.0, xb_(i)) + opt_.feasibility_tol) / w(i));
    }
    if (!std::isfinite(bound)) return -1;
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w(i) <= opt_.pivot_tol) continue;
      if (std::max(0.0, xb_(i)) / w(i) <= bound && (best < 0 || w(i) > w(best))) best = i;
    }
    return best;
  }

  void drive_out_artificials() {
    for (std::size_t k = 0; k < basis_.size();) {
      if (basis_[k] < n_) {
        ++k;
        continue;
      }
      factor();
      Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows_.size()));
      e(static_cast<Eigen::Index>(k)) = 1.0;
      const Eigen::VectorXd rho = lu_.transpose().solve(e);
      const Eigen::VectorXd row = ak_.leftCols(n_).transpose() * rho;
      Eigen::Index best = -1;
      double best_abs = 1e-9;
      for (Eigen::Index j = 0; j < n_; ++j) {
        if (std::find(basis_.begin(), basis_.end(), j) != basis_.end()) continue;
        if (std::abs(row(j)) > best_abs) {
          best_abs = std::abs(row(j));
          best = j;
        }
      }
      if (best >= 0) {
        // The artificial is at (numerically) zero, so the swap keeps feasibility.
        basis_[k] = best;
        ++k;
        continue;
      }
      // Every original column vanishes in this row: the constraint is redundant.
      basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(k));
      rows_.erase(rows_.begin() + static_cast<std::ptrdiff_t>(k));
      rebuild_rows();
    }
  }

  SimplexOptions opt_;
  Eigen::Index n_;
  Eigen::Index m0_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::VectorXd c_;
  Eigen::VectorXd sign_;
  Eigen::MatrixXd ak_;
  Eigen::VectorXd bk_;
  std::vector<Eigen::Index> rows_;
  std::vector<Eigen::Index> basis_;
  std::vector<char> allowed_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::VectorXd xb_;
  std::size_t iterations_ = 0;
};

}  // namespace detail

/// Solves max c^T x s.t. A x = b, x >= 0.
inline LpSolution solve_lp(const LpProblem& lp, const SimplexOptions& opt = {}) {
  lp.validate();
  LpSolution sol;
  if (lp.rows() == 0) {
    if ((lp.objective.array() > 0.0).any()) {
      sol.status = LpStatus::unbounded;
    } else {
      sol.status = LpStatus::optimal;
      sol.x = Eigen::VectorXd::Zero(lp.objective.size());
      sol.duals = Eigen::VectorXd();
      sol.objective = 0.0;
      sol.primal_residual = 0.0;
    }
    return sol;
  }
  sol = detail::RevisedSimplex(lp, opt).solve();
  if (sol.status == LpStatus::optimal) {
    sol.primal_residual = (lp.constraints * sol.x - lp.rhs).lpNorm<Eigen::Infinity>();
  }
  return sol;
}

}  // namespace calibra
