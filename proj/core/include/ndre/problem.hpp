#pragma once

#include <cstdint>

#include "ndre/operators.hpp"
#include "ndre/types.hpp"

namespace ndre {

// Differential Riccati problem
//   X'(t) = -A X - X D + X S X + F G^T,  X(0) = Z01 Z02^T,
// with X(t) of size n x p, A: n x n, D: p x p, S: p x n, F: n x s, G: p x s.
struct NDREProblem {
  OperatorPtr A;
  OperatorPtr D;
  CouplingMatrix S;
  Matrix F;
  Matrix G;
  LowRankFactorPair X0;

  Index n() const { return A ? A->dim() : 0; }
  Index p() const { return D ? D->dim() : 0; }
};

struct Quadrature {
  Vector nodes;
  Vector weights;
};

// Gauss-Legendre rule on [0,1] normalized so the weights sum to 1.
// Nodes are returned in descending order, all strictly inside (0,1).
// Computed from the symmetric Jacobi tridiagonal eigenproblem, which stays
// stable for n well beyond 10^4.
Quadrature gauss_legendre_01(Index n);

struct TransportParams {
  Index n = 0;
  double c = 0.5;    // in (0,1]
  double alpha = 0;  // in [0,1)
};

struct TransportCoefficients {
  Vector delta;  // 1 / (c w_i (1+alpha))
  Vector gamma;  // 1 / (c w_i (1-alpha))
  Vector q;      // c_i / (2 w_i)
  Quadrature quad;
};

TransportCoefficients transport_coefficients(const TransportParams& params);

// Particle-transport family: A = diag(delta) - e q^T, D = diag(gamma) - q e^T,
// S = q q^T (rank one), F = G = e, X0 = 0. Both A and D invert in O(n) per
// column through the Sherman-Morrison identity.
NDREProblem build_transport_problem(const TransportParams& params);

// Sparse benchmark family: A = D with 2 on the diagonal, -1 on the
// superdiagonal and in entry (n,1); S = diag(1,1,0,...,0) as rank-2 factors;
// F, G are n x 2 with reproducible uniform [0,1) entries drawn from rng_seed
// (column-major fill order, F first, then G); X0 = 0.
NDREProblem build_guo_problem(Index n, std::uint64_t rng_seed);

enum class MMatrixClass { NonsingularM, SingularM, NotM };

// Writes L = sI - H with s = max diagonal entry and compares s against the
// spectral radius of H. Positive off-diagonal entries disqualify immediately.
// The nonsingular/singular split uses a tolerance of 1e-12 relative to s.
// Dense eigensolver inside: sizes are capped at 2000.
MMatrixClass validate_m_matrix(const Matrix& l);

// Dense assembly of the (p+n) x (p+n) block matrix [[D, -S], [-FG^T, A]]
// whose M-matrix structure governs existence of the minimal nonnegative
// steady state. Oracle scale only.
Matrix assemble_m_matrix(const NDREProblem& problem);

}  // namespace ndre
