#pragma once

#include <Eigen/LU>

#include "ndre/types.hpp"

namespace ndre {

// Reciprocal condition estimate that stays meaningful on exactly singular
// factorizations: Eigen's estimator can report 1 when a pivot is exactly
// zero, so the estimate is capped by the smallest pivot relative to the
// factor scale.
double lu_rcond_guarded(const Eigen::PartialPivLU<Matrix>& lu);

// Solves A X + X B = C by Schur reduction of both operands and blockwise
// back-substitution (quasi-triangular, so everything stays real).
// Throws SingularError when A and -B (numerically) share an eigenvalue.
Matrix solve_sylvester(const Matrix& a, const Matrix& b, const Matrix& c);

// Scaling-and-squaring with diagonal Pade approximants, degree and scale
// chosen from the 1-norm by the standard thresholds.
Matrix matrix_exponential(const Matrix& m);

struct NareResult {
  Matrix X;
  int iterations = 0;
};

// Newton iteration for -A X - X D + X S X + Q = 0 at dense (projected or
// oracle) scale. Each step solves
//   (A - X_l S) X + X (D - S X_l) = Q - X_l S X_l,
// the linearization of the quadratic map at X_l. Plain Newton, no damping;
// stops when ||X_{l+1} - X_l||_F < tol. Throws ConvergenceError when itermax
// is exhausted, with the last step size in the message.
NareResult solve_small_nare_newton(const Matrix& a, const Matrix& d,
                                   const Matrix& s, const Matrix& q,
                                   const Matrix& x_init, double tol,
                                   int itermax);

// SVD truncation Y ~= Z1 Z2^T keeping singular values above tol_rel * sigma_1
// (at most max_rank of them when max_rank >= 0); the square roots of the kept
// singular values are split between the two factors.
LowRankFactorPair truncated_svd_factor(const Matrix& y, double tol_rel,
                                       Index max_rank = -1);

// Re-truncates an existing factored product without forming it: thin QR of
// both factors, SVD of the small core.
LowRankFactorPair compress_factors(const LowRankFactorPair& x, double tol_rel,
                                   Index max_rank = -1);

double spectral_norm(const Matrix& m);

}  // namespace ndre
