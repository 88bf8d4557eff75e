#include "ndre/reference_oracles.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "ndre/dense_kernels.hpp"
#include "ndre/krylov.hpp"

namespace ndre {

namespace {

constexpr Index kEmbeddingCap = 2000;  // n + p for the dense embedding
constexpr Index kDenseBdfCap = 300;    // max(n, p) for the dense BDF oracle

ProjectedNDRE dense_embedding(const NDREProblem& problem) {
  ProjectedNDRE full;
  full.T_A = problem.A->dense();
  full.T_D = problem.D->dense();
  full.S_m = problem.S.dense();
  full.F_m = problem.F;
  full.G_m = problem.G;
  full.Y0 = problem.X0.dense();
  return full;
}

}  // namespace

Trajectory solve_ndre_direct_exp(const NDREProblem& problem,
                                 const std::vector<double>& t_grid,
                                 bool allow_large) {
  if (!allow_large && problem.n() + problem.p() > kEmbeddingCap) {
    throw std::invalid_argument(
        "solve_ndre_direct_exp: problem too large for a dense embedding "
        "(pass allow_large to override)");
  }
  if (t_grid.empty() || t_grid.front() != 0.0) {
    throw std::invalid_argument(
        "solve_ndre_direct_exp: the time grid must start at 0");
  }
  return solve_projected_exp(dense_embedding(problem), t_grid);
}

Matrix solve_ndre_direct_exp(const NDREProblem& problem, double t,
                             bool allow_large) {
  if (t < 0.0) {
    throw std::invalid_argument("solve_ndre_direct_exp: t must be >= 0");
  }
  std::vector<double> grid{0.0};
  if (t > 0.0) grid.push_back(t);
  return solve_ndre_direct_exp(problem, grid, allow_large).values.back();
}

Matrix nare_minimal_solution(const NDREProblem& problem, double tol,
                             int itermax) {
  if (!(tol > 0.0)) {
    throw std::invalid_argument("nare_minimal_solution: tol must be positive");
  }
  const Index n = problem.n();
  const Index p = problem.p();
  const Matrix l = assemble_m_matrix(problem);
  if (validate_m_matrix(l) != MMatrixClass::NonsingularM) {
    throw std::invalid_argument(
        "nare_minimal_solution: the block matrix [[D, -S], [-Q, A]] must be "
        "a nonsingular M-matrix");
  }
  const Matrix d = l.topLeftCorner(p, p);
  const Matrix s = -l.topRightCorner(p, n);
  const Matrix q = -l.bottomLeftCorner(n, p);
  const Matrix a = l.bottomRightCorner(n, n);

  // A nonsingular M-matrix has a positive diagonal, so the shift only fires
  // on degenerate near-zero diagonals.
  Vector a1 = a.diagonal();
  Vector d1 = d.diagonal();
  const double floor = a1.minCoeff() + d1.minCoeff();
  if (floor <= 0.0) {
    const double shift = 0.5 * (1.0 - floor);
    a1.array() += shift;
    d1.array() += shift;
  }
  const Matrix a2 = Matrix(a1.asDiagonal()) - a;
  const Matrix d2 = Matrix(d1.asDiagonal()) - d;

  Matrix x = Matrix::Zero(n, p);
  double delta = 0.0;
  for (int it = 0; it < itermax; ++it) {
    const Matrix rhs = x * (s * x) + a2 * x + x * d2 + q;
    Matrix next(n, p);
    for (Index j = 0; j < p; ++j) {
      next.col(j) = rhs.col(j).array() / (a1.array() + d1(j));
    }
    delta = (next - x).norm();
    x.swap(next);
    if (delta < tol) return x;
  }
  throw ConvergenceError(
      "nare_minimal_solution: splitting iteration still moving by " +
      std::to_string(delta) + " after " + std::to_string(itermax) +
      " sweeps; raise itermax (convergence degrades towards the critical "
      "transport regime)");
}

Matrix direct_exp_projected(const NDREProblem& problem, int m, double t) {
  if (m < 1) {
    throw std::invalid_argument("direct_exp_projected: m must be >= 1");
  }
  if (t < 0.0) {
    throw std::invalid_argument("direct_exp_projected: t must be >= 0");
  }

  KrylovState sa = eba_init(*problem.A, problem.F);
  for (int j = 1; j < m && !sa.breakdown; ++j) sa = eba_step(sa, *problem.A);
  const OperatorPtr dt = transpose(problem.D);
  KrylovState sd = eba_init(*dt, problem.G);
  for (int j = 1; j < m && !sd.breakdown; ++j) sd = eba_step(sd, *dt);

  const Matrix v = sa.basis_dense();
  const Matrix w = sd.basis_dense();
  const Index k = v.cols();
  const Index l = w.cols();

  ProjectedNDRE proj;
  proj.T_A = v.transpose() * problem.A->apply(v);
  proj.T_D = w.transpose() * problem.D->apply(w);
  proj.S_m = w.transpose() * problem.S.apply(v);
  proj.F_m = v.transpose() * problem.F;
  proj.G_m = w.transpose() * problem.G;
  const Matrix vz1 = v.transpose() * problem.X0.Z1;  // k x r
  proj.Y0 = vz1 * (w.transpose() * problem.X0.Z2).transpose();

  // The quotient collapses to the Galerkin solution exactly when the initial
  // data's corange fits inside span(W); that covers X0 = 0 and the full
  // subspace, and allows the stiff-safe re-normalized evaluation.
  const Matrix x0tv = problem.X0.Z2 * vz1.transpose();  // X0^T V, p x k
  const double defect = (x0tv - w * (w.transpose() * x0tv)).norm();
  if (defect <= 1e-12 * std::max(1.0, x0tv.norm())) {
    std::vector<double> grid{0.0};
    if (t > 0.0) grid.push_back(t);
    const Trajectory traj = solve_projected_exp(proj, grid);
    return v * traj.values.back() * w.transpose();
  }

  // General initial data: one shot through the compressed embedding. The
  // denominator block has rank at most l < p, so the quotient is the
  // least-squares one; the un-normalized flow limits t to the range of
  // e^{t H_m} in double precision.
  Matrix ham(l + k, l + k);
  ham.topLeftCorner(l, l) = proj.T_D;
  ham.topRightCorner(l, k) = -proj.S_m;
  ham.bottomLeftCorner(k, l) = proj.F_m * proj.G_m.transpose();
  ham.bottomRightCorner(k, k) = -proj.T_A;

  Matrix gamma(l + k, problem.p());
  gamma.topRows(l) = w.transpose();
  gamma.bottomRows(k) = vz1 * problem.X0.Z2.transpose();

  Matrix phi;
  try {
    phi = matrix_exponential(t * ham) * gamma;
  } catch (const std::overflow_error&) {
    phi = Matrix::Constant(l + k, problem.p(),
                           std::numeric_limits<double>::infinity());
  }
  if (!phi.allFinite()) {
    throw SingularError(
        "direct_exp_projected: e^{t H_m} overflows at this t; the one-shot "
        "flow only covers moderate t * ||H_m||");
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(
      phi.topRows(l).transpose());
  cod.setThreshold(1e-12);
  if (cod.rank() < l) {
    throw SingularError(
        "direct_exp_projected: the denominator block of the compressed flow "
        "lost rank; the quotient is not defined at this t");
  }
  const Matrix quotient_t = cod.solve(phi.bottomRows(k).transpose());
  return v * quotient_t.transpose() * w.transpose();
}

Trajectory integrate_dense(const NDREProblem& problem, double h, double t_f,
                           int order, bool allow_large) {
  if (!allow_large && std::max(problem.n(), problem.p()) > kDenseBdfCap) {
    throw std::invalid_argument(
        "integrate_dense: problem too large for the dense BDF oracle "
        "(pass allow_large to override)");
  }
  return solve_projected_bdf(dense_embedding(problem), order, h, t_f);
}

}  // namespace ndre
