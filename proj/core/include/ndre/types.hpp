#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace ndre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Thrown when a solve meets a numerically singular matrix or pencil.
class SingularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when an iteration exhausts its budget before reaching tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// X = Z1 * Z2^T kept in factored form. Z1 and Z2 always have the same number
// of columns; zero columns encode X = 0 without losing the outer dimensions.
struct LowRankFactorPair {
  Matrix Z1;
  Matrix Z2;

  Index rank() const { return Z1.cols(); }
  Matrix dense() const { return Z1 * Z2.transpose(); }
};

LowRankFactorPair zero_factors(Index rows1, Index rows2);

// ||Z1 Z2^T||_F from thin QR factors of Z1 and Z2; the product is never
// formed, and near-cancelling column blocks do not inflate the result the way
// a Gram-trace evaluation would.
double factored_frobenius_norm(const LowRankFactorPair& x);

// ||X - Y||_F for two factored matrices with matching outer dimensions.
double factored_frobenius_distance(const LowRankFactorPair& x,
                                   const LowRankFactorPair& y);

}  // namespace ndre
