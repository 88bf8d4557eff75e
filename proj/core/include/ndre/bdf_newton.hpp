#pragma once

#include <Eigen/LU>

#include <deque>
#include <utility>
#include <vector>

#include "ndre/operators.hpp"
#include "ndre/problem.hpp"
#include "ndre/solver.hpp"
#include "ndre/types.hpp"

namespace ndre {

// scale * M + shift * I - U V^T without forming the combination. Forward
// products go through the base operator; inverse applications use the
// Sherman-Morrison-Woodbury identity against the shifted base M_s,
//   (M_s - U V^T)^{-1} = M_s^{-1} + M_s^{-1} U (I - V^T M_s^{-1} U)^{-1} V^T M_s^{-1},
// with M_s^{-1} U, M_s^{-T} V and the capacitance factorization cached at
// construction. When M_s cannot be inverted (or the capacitance vanishes)
// the operator stays usable for forward products and reports !invertible(),
// which is all the plain block Krylov process needs.
class ShiftedOperator final : public LinearOperator {
 public:
  ShiftedOperator(OperatorPtr base, double scale, double shift, Matrix u,
                  Matrix v);

  Index dim() const override { return base_->dim(); }
  bool invertible() const override { return invertible_; }
  Matrix apply(const Matrix& x) const override;
  Matrix apply_transpose(const Matrix& x) const override;
  Matrix apply_inverse(const Matrix& x) const override;
  Matrix apply_inverse_transpose(const Matrix& x) const override;
  Matrix dense() const override;
  OperatorPtr scaled_shifted(double scale, double shift) const override;

  double scale() const { return scale_; }
  double shift() const { return shift_; }
  Index correction_rank() const { return u_.cols(); }

 private:
  OperatorPtr base_;
  OperatorPtr shifted_;  // scale * base + shift * I; null when unbuildable
  double scale_ = 1.0;
  double shift_ = 0.0;
  Matrix u_, v_;
  Matrix minv_u_;   // M_s^{-1} U
  Matrix mtinv_v_;  // M_s^{-T} V
  // I - V^T M_s^{-1} U; its transpose is the capacitance of the transposed
  // operator, so one factorization serves both solve directions.
  Eigen::PartialPivLU<Matrix> cap_lu_;
  bool invertible_ = false;
};

// Ring buffer of the most recent factored iterates with their timestamps,
// newest first. Capacity equals the multistep depth; pushing beyond it
// drops the oldest entry. Outer dimensions are fixed by the first push.
class FactoredHistory {
 public:
  explicit FactoredHistory(int capacity);

  void push(LowRankFactorPair x, double time);
  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  const LowRankFactorPair& factors(int i) const;  // i = 0 is the newest
  double time(int i) const;

 private:
  int capacity_ = 0;
  std::deque<std::pair<LowRankFactorPair, double>> entries_;
};

struct BdfNewtonOptions {
  double newton_tol = 1e-10;  // relative Frobenius size of the last update
  int newton_itermax = 10;
  double inner_tol = 1e-12;  // Sylvester residual over its right-hand side
  int inner_itermax = 50;
  Index r_max = 100;  // rank cap on stored iterates
  double trunc_tol = 1e-12;
  // Grow the inner Krylov bases with inverse products too. Needs invertible
  // shifted operators; the default sticks to forward products, which also
  // cover singular or ill-conditioned shifts.
  bool use_extended = false;
};

// Factors of the constant term of one multistep step,
//   Ftilde Gtilde^T = h beta F G^T + sum_i alpha[i] Z_{k-i,1} Z_{k-i,2}^T,
// built by concatenating scaled blocks: sqrt(h beta) on the given pair,
// |alpha_i|^{1/2} on both history factors with the sign of alpha_i carried
// by the Gtilde block (never under the square root). The product is exact;
// only a rank beyond r_max triggers an SVD re-compression.
LowRankFactorPair build_bdf_rhs_factors(const FactoredHistory& history,
                                        const Matrix& f, const Matrix& g,
                                        double h, double beta,
                                        const std::vector<double>& alpha,
                                        Index r_max = 100,
                                        double trunc_tol = 1e-12);

// Solves A X + X D + F G^T = 0 by Galerkin projection onto block Krylov
// subspaces of (A, F) and (D^T, G), one step per side and iteration. The
// residual never has to be assembled: after the small Sylvester solve it is
// read off the coupling blocks exactly as in residual_norm. Stops when the
// Frobenius residual drops below tol * ||F G^T||_F or both processes hit an
// invariant subspace (the projection is then exact); throws ConvergenceError
// when itermax iterations are not enough. A side whose operator cannot be
// inverted falls back from the extended to the plain process on its own.
LowRankFactorPair sylvester_low_rank_krylov(const OperatorPtr& a_op,
                                            const OperatorPtr& d_op,
                                            const Matrix& f, const Matrix& g,
                                            double tol = 1e-12,
                                            int itermax = 50,
                                            bool use_extended = false,
                                            double trunc_tol = 1e-12);

// One Newton step for the algebraic Riccati equation
//   -A X - X D + X S X + Ftilde Gtilde^T = 0
// linearized at `current`: the next iterate solves the Sylvester equation
//   (A - X S) X_next + X_next (D - S X) = Ftilde Gtilde^T - X S X.
// Both shifted coefficients are wrapped as ShiftedOperator with the rank-r
// correction taken from the current factors, and the right-hand side is
// passed factored as [X-factors * (S-products), Ftilde] against
// [X-factors, -Gtilde], so nothing of size n x p is ever formed.
LowRankFactorPair newton_step_nare(const LowRankFactorPair& current,
                                   const OperatorPtr& a_shifted,
                                   const OperatorPtr& d_shifted,
                                   const CouplingMatrix& s_scaled,
                                   const Matrix& f_tilde,
                                   const Matrix& g_tilde,
                                   const BdfNewtonOptions& opts = {});

struct BdfNewtonSolution {
  std::vector<double> times;               // 0, h, ..., t_f
  std::vector<LowRankFactorPair> factors;  // X at each time, factored
  SolveReport report;
};

// Multistep integration of the full-scale problem: each step k solves the
// algebraic Riccati equation with coefficients h*beta*A + I/2, h*beta*D + I/2
// and h*beta*S and the constant term rebuilt from the factored history, by
// Newton iterations warm-started at the previous step. The iteration accepts
// when the relative update ||X^{l+1} - X^l||_F / ||X^l||_F (computed from
// rank-sized Gram products) drops below newton_tol, and aborts with a
// ConvergenceError naming the step and the last update size when
// newton_itermax is not enough. Orders 2 and 3 ramp up through the lower
// orders while the history fills. Accepted iterates are re-truncated at
// trunc_tol / r_max before they enter the history.
//
// Report mapping: one checks entry per time step with m = step index,
// residual_fro / ratio = the algebraic equation's residual of the accepted
// iterate (absolute / over the step's constant term), residual_two = the
// last relative Newton update, pert_a = Newton iterations used and pert_d =
// stored rank. basis_cols_a/d carry the final factor rank.
BdfNewtonSolution solve_ndre_bdf_newton(const NDREProblem& problem,
                                        int s_order, double h, double t_f,
                                        const BdfNewtonOptions& opts = {});

}  // namespace ndre
