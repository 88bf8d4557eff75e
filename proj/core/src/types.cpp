#include "ndre/types.hpp"

#include <algorithm>
#include <cmath>

namespace ndre {

LowRankFactorPair zero_factors(Index rows1, Index rows2) {
  return {Matrix::Zero(rows1, 0), Matrix::Zero(rows2, 0)};
}

namespace {

// R from a Householder QR, min(rows, cols) x cols upper trapezoidal.
Matrix qr_triangular_factor(const Matrix& m) {
  Eigen::HouseholderQR<Matrix> qr(m);
  const Index q = std::min(m.rows(), m.cols());
  return qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
}

}  // namespace

// ||Z1 Z2^T||_F = ||R1 R2^T||_F with Z1 = Q1 R1, Z2 = Q2 R2.  Evaluating the
// rank-sized triangular product keeps the round-off at eps * ||Z1|| ||Z2||; a
// Gram-trace evaluation would lose half the digits whenever the column blocks
// nearly cancel, which is exactly the regime residual and update norms live in.
double factored_frobenius_norm(const LowRankFactorPair& x) {
  if (x.rank() == 0) return 0.0;
  return (qr_triangular_factor(x.Z1) * qr_triangular_factor(x.Z2).transpose())
      .norm();
}

double factored_frobenius_distance(const LowRankFactorPair& x,
                                   const LowRankFactorPair& y) {
  if (y.rank() == 0) return factored_frobenius_norm(x);
  if (x.rank() == 0) return factored_frobenius_norm(y);
  Matrix l(x.Z1.rows(), x.rank() + y.rank());
  l << x.Z1, y.Z1;
  Matrix r(x.Z2.rows(), x.rank() + y.rank());
  r << x.Z2, -y.Z2;
  return factored_frobenius_norm({std::move(l), std::move(r)});
}

}  // namespace ndre
