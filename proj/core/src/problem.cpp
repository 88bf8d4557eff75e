#include "ndre/problem.hpp"

#include <lapacke.h>

#include <cmath>
#include <random>
#include <vector>

namespace ndre {

Quadrature gauss_legendre_01(Index n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre_01: n must be >= 1");
  if (n == 1) return {Vector::Constant(1, 0.5), Vector::Constant(1, 1.0)};

  // Jacobi matrix of the Legendre recurrence on [-1,1]: zero diagonal,
  // off-diagonal k / sqrt(4k^2 - 1).
  std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
  std::vector<double> off(static_cast<std::size_t>(n - 1));
  for (Index k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    off[static_cast<std::size_t>(k - 1)] = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  std::vector<double> z(static_cast<std::size_t>(n * n));
  const lapack_int info =
      LAPACKE_dstevd(LAPACK_COL_MAJOR, 'V', static_cast<lapack_int>(n),
                     diag.data(), off.data(), z.data(),
                     static_cast<lapack_int>(n));
  if (info != 0) {
    throw std::runtime_error("gauss_legendre_01: tridiagonal eigensolver failed");
  }

  // Eigenvalues come back ascending on [-1,1]; weights are 2 * z(0,i)^2.
  // Mapping to [0,1] halves the weights and we flip to descending nodes.
  Quadrature rule{Vector(n), Vector(n)};
  for (Index i = 0; i < n; ++i) {
    const Index j = n - 1 - i;
    const double z0 = z[static_cast<std::size_t>(j * n)];
    rule.nodes(i) = 0.5 * (diag[static_cast<std::size_t>(j)] + 1.0);
    rule.weights(i) = z0 * z0;
  }
  return rule;
}

TransportCoefficients transport_coefficients(const TransportParams& params) {
  if (params.n < 1) {
    throw std::invalid_argument("transport_coefficients: n must be >= 1");
  }
  if (!(params.c > 0.0 && params.c <= 1.0)) {
    throw std::invalid_argument("transport_coefficients: c must lie in (0,1]");
  }
  if (!(params.alpha >= 0.0 && params.alpha < 1.0)) {
    throw std::invalid_argument("transport_coefficients: alpha must lie in [0,1)");
  }
  TransportCoefficients tc;
  tc.quad = gauss_legendre_01(params.n);
  const Vector& w = tc.quad.nodes;
  tc.delta = (params.c * (1.0 + params.alpha) * w).cwiseInverse();
  tc.gamma = (params.c * (1.0 - params.alpha) * w).cwiseInverse();
  tc.q = tc.quad.weights.cwiseQuotient(2.0 * w);
  return tc;
}

NDREProblem build_transport_problem(const TransportParams& params) {
  const TransportCoefficients tc = transport_coefficients(params);
  const Index n = params.n;
  const Vector e = Vector::Ones(n);

  NDREProblem problem;
  problem.A = std::make_shared<DiagPlusRankOne>(tc.delta, e, tc.q);
  problem.D = std::make_shared<DiagPlusRankOne>(tc.gamma, tc.q, e);
  problem.S = CouplingMatrix::from_factors(tc.q, tc.q);
  problem.F = e;
  problem.G = e;
  problem.X0 = zero_factors(n, n);
  return problem;
}

NDREProblem build_guo_problem(Index n, std::uint64_t rng_seed) {
  if (n < 3) throw std::invalid_argument("build_guo_problem: n must be >= 3");

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(2 * n));
  for (Index i = 0; i < n; ++i) trips.emplace_back(i, i, 2.0);
  for (Index i = 0; i + 1 < n; ++i) trips.emplace_back(i, i + 1, -1.0);
  trips.emplace_back(n - 1, 0, -1.0);
  SparseMatrix a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  auto op = std::make_shared<SparseOperator>(std::move(a));

  Matrix s_factor = Matrix::Zero(n, 2);
  s_factor(0, 0) = 1.0;
  s_factor(1, 1) = 1.0;

  // 53-bit uniform [0,1) draws straight from the generator output so the
  // values do not depend on the standard library's distribution internals.
  std::mt19937_64 rng(rng_seed);
  auto draw = [&rng]() {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  Matrix f(n, 2), g(n, 2);
  for (Index j = 0; j < 2; ++j)
    for (Index i = 0; i < n; ++i) f(i, j) = draw();
  for (Index j = 0; j < 2; ++j)
    for (Index i = 0; i < n; ++i) g(i, j) = draw();

  NDREProblem problem;
  problem.A = op;
  problem.D = op;
  problem.S = CouplingMatrix::from_factors(s_factor, s_factor);
  problem.F = std::move(f);
  problem.G = std::move(g);
  problem.X0 = zero_factors(n, n);
  return problem;
}

MMatrixClass validate_m_matrix(const Matrix& l) {
  if (l.rows() != l.cols()) {
    throw std::invalid_argument("validate_m_matrix: matrix must be square");
  }
  if (l.rows() > 2000) {
    throw std::invalid_argument("validate_m_matrix: oracle-scale only (size <= 2000)");
  }
  const Index k = l.rows();
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < k; ++i) {
      if (i != j && l(i, j) > 0.0) return MMatrixClass::NotM;
    }
  }
  const double s = l.diagonal().maxCoeff();
  Matrix h = -l;
  h.diagonal().array() += s;
  const double radius =
      k == 0 ? 0.0 : Eigen::EigenSolver<Matrix>(h, false).eigenvalues().cwiseAbs().maxCoeff();
  const double tol = 1e-12 * std::max(std::abs(s), 1.0);
  if (s > radius + tol) return MMatrixClass::NonsingularM;
  if (std::abs(s - radius) <= tol) return MMatrixClass::SingularM;
  return MMatrixClass::NotM;
}

Matrix assemble_m_matrix(const NDREProblem& problem) {
  const Index n = problem.n();
  const Index p = problem.p();
  if (n + p > 2000) {
    throw std::invalid_argument("assemble_m_matrix: oracle-scale only (n + p <= 2000)");
  }
  Matrix l(p + n, p + n);
  l.topLeftCorner(p, p) = problem.D->dense();
  l.topRightCorner(p, n) = -problem.S.dense();
  l.bottomLeftCorner(n, p) = -problem.F * problem.G.transpose();
  l.bottomRightCorner(n, n) = problem.A->dense();
  return l;
}

}  // namespace ndre
