#pragma once

#include <numbers>
#include <vector>

#include "ndre/types.hpp"

namespace ndre {

// Small differential Riccati equation obtained by projecting the full
// problem onto a pair of Krylov bases:
//   Y' = -T_A Y - Y T_D + Y S_m Y + F_m G_m^T,  Y(0) = Y0.
// Dimensions: T_A is k x k, T_D is l x l, S_m is l x k, F_m is k x s,
// G_m is l x s, Y0 is k x l.  k = l is typical but not assumed.
struct ProjectedNDRE {
  Matrix T_A;
  Matrix T_D;
  Matrix S_m;
  Matrix F_m;
  Matrix G_m;
  Matrix Y0;
};

// Solution samples on an ascending time grid; values[0] is the initial data.
struct Trajectory {
  std::vector<double> times;
  std::vector<Matrix> values;
};

// Backward differentiation formula coefficients:
//   Y_{k+1} = sum_i alpha[i] * Y_{k-i} + h * beta * f(Y_{k+1}).
struct BdfTable {
  double beta;
  std::vector<double> alpha;
};

BdfTable bdf_table(int s_order);

// Propagates [Y1; Y2] with the linearizing block matrix
//   [[T_D, -S_m], [F_m G_m^T, -T_A]]
// and recovers Y = Y2 * Y1^{-1}, re-normalizing after every substep so the
// linear blocks never drift far from the identity.  A substep whose Y1 block
// becomes ill-conditioned (rcond < 1e-12) is halved and retried, at most
// substep_limit times per grid interval before giving up.
Trajectory solve_projected_exp(const ProjectedNDRE& proj,
                               const std::vector<double>& t_grid,
                               int substep_limit = 30);

// Implicit multistep integration: each step solves the small algebraic
// Riccati equation
//   -(I/2 + h b T_A) Y - Y (I/2 + h b T_D) + Y (h b S_m) Y + Q_k = 0
// by Newton, warm-started at the previous step.  Orders above 1 ramp up
// through the lower orders while the history fills.
Trajectory solve_projected_bdf(const ProjectedNDRE& proj, int s_order,
                               double h, double t_f,
                               double newton_tol = 1e-12,
                               int newton_itermax = 30);

inline constexpr double rosenbrock2_default_gamma =
    1.0 + std::numbers::sqrt2 / 2.0;

// Two-stage linearly implicit scheme; both stages solve a Sylvester equation
// with the shifted matrices gamma*T_A - I/(2h) and gamma*T_D - I/(2h).
// Caution: with this sign of the shift the stage map amplifies modes once
// h * (spectral width of T_A + T_D) grows past a small window (~0.25), so
// stiff models need very small steps; a blow-up surfaces as a
// ConvergenceError rather than silent garbage.
Trajectory solve_projected_rosenbrock2(const ProjectedNDRE& proj, double h,
                                       double gamma, double t_f);

}  // namespace ndre
