#pragma once

#include <vector>

#include "ndre/problem.hpp"
#include "ndre/projected_integrators.hpp"

namespace ndre {

// Dense ground-truth paths used to cross-check the low-rank solvers. All of
// them materialize full matrices, so the entry points carry hard scale caps;
// pass allow_large to lift a cap deliberately.

// Flow of the linear embedding [Y; Z]' = [[D, -S], [F G^T, -A]] [Y; Z] from
// [I; X0], recovering X(t) = Z Y^{-1}. The flow is re-normalized after every
// substep, so Y only has to stay invertible between substeps; a persistently
// singular Y block raises SingularError.
Matrix solve_ndre_direct_exp(const NDREProblem& problem, double t,
                             bool allow_large = false);

// Same flow sampled on a whole grid (must start at 0, strictly increasing).
Trajectory solve_ndre_direct_exp(const NDREProblem& problem,
                                 const std::vector<double>& t_grid,
                                 bool allow_large = false);

// Minimal nonnegative steady state of -A X - X D + X S X + Q = 0 via the
// diagonal splitting: with A1 = diag(A), D1 = diag(D) (shifted up when the
// diagonals are not positive) each sweep solves
//   A1 X_{k+1} + X_{k+1} D1 = X_k S X_k + (A1 - A) X_k + X_k (D1 - D) + Q
// entrywise. Requires the block matrix [[D, -S], [-Q, A]] to be a
// nonsingular M-matrix; iterates from 0 are then entrywise nondecreasing and
// converge to the minimal solution. Stops when the Frobenius update drops
// below tol; throws ConvergenceError when itermax is exhausted (slow
// convergence is expected close to the critical transport regime).
Matrix nare_minimal_solution(const NDREProblem& problem, double tol = 1e-13,
                             int itermax = 100000);

// One-shot projected exponential: builds extended Krylov bases V (m blocks
// on A from F) and W (m blocks on D^T from G), compresses the embedding flow
// through blkdiag(W, V) and forms the least-squares quotient
//   X~ = V y2 pinv(y1) W^T,   [y1; y2] = e^{t H_m} [W^T; V^T X0].
// When range(X0^T V) lies inside range(W) -- in particular for X0 = 0 and at
// full subspace -- the quotient equals the Galerkin solution and is evaluated
// through the re-normalized substepped flow, which keeps it usable for stiff
// problems at any t. Otherwise the exponential is taken in one shot, which
// limits t to the representable range of e^{t H_m}; exceeding it, or a
// rank-deficient denominator block, raises SingularError.
Matrix direct_exp_projected(const NDREProblem& problem, int m, double t);

// Fixed-step dense BDF(order) reference integrator with a Newton solve per
// step; the whole problem is treated as one dense projected equation.
Trajectory integrate_dense(const NDREProblem& problem, double h, double t_f,
                           int order, bool allow_large = false);

}  // namespace ndre
