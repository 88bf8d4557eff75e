#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>

#include "ndre/types.hpp"

namespace ndre {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Square linear operator applied blockwise to tall matrices. The inverse
// applications throw SingularError when the operator is (numerically) not
// invertible; callers that only need forward products may ignore that case.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual Index dim() const = 0;
  virtual bool invertible() const = 0;

  virtual Matrix apply(const Matrix& x) const = 0;
  virtual Matrix apply_transpose(const Matrix& x) const = 0;
  virtual Matrix apply_inverse(const Matrix& x) const = 0;
  virtual Matrix apply_inverse_transpose(const Matrix& x) const = 0;

  // Materializes the operator. Meant for small problems, tests and oracles.
  virtual Matrix dense() const = 0;

  // Returns scale * M + shift * I with the same storage kind as M, so that
  // structure (sparsity, diagonal plus rank one) survives the combination.
  virtual std::shared_ptr<const LinearOperator> scaled_shifted(
      double scale, double shift) const = 0;
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(Matrix m);

  Index dim() const override { return m_.rows(); }
  bool invertible() const override { return invertible_; }
  Matrix apply(const Matrix& x) const override;
  Matrix apply_transpose(const Matrix& x) const override;
  Matrix apply_inverse(const Matrix& x) const override;
  Matrix apply_inverse_transpose(const Matrix& x) const override;
  Matrix dense() const override { return m_; }
  OperatorPtr scaled_shifted(double scale, double shift) const override;

 private:
  Matrix m_;
  Eigen::PartialPivLU<Matrix> lu_;
  bool invertible_ = false;
};

class SparseOperator final : public LinearOperator {
 public:
  explicit SparseOperator(SparseMatrix m);

  Index dim() const override { return m_.rows(); }
  bool invertible() const override { return invertible_; }
  Matrix apply(const Matrix& x) const override;
  Matrix apply_transpose(const Matrix& x) const override;
  Matrix apply_inverse(const Matrix& x) const override;
  Matrix apply_inverse_transpose(const Matrix& x) const override;
  Matrix dense() const override { return Matrix(m_); }
  OperatorPtr scaled_shifted(double scale, double shift) const override;

  const SparseMatrix& sparse() const { return m_; }

 private:
  SparseMatrix m_;
  // SparseLU::transpose() is a non-const view in Eigen 3.4; solving does not
  // touch the factorization.
  mutable Eigen::SparseLU<SparseMatrix> lu_;
  bool invertible_ = false;
};

// diag(d) - u v^T. Inversion runs in O(n) per column through the
// Sherman-Morrison identity. The capacitance 1 - v^T diag(d)^{-1} u is
// checked once against a scale built from the absolute contributions;
// singular configurations are rejected at construction.
class DiagPlusRankOne final : public LinearOperator {
 public:
  DiagPlusRankOne(Vector d, Vector u, Vector v);

  Index dim() const override { return d_.size(); }
  bool invertible() const override { return invertible_; }
  Matrix apply(const Matrix& x) const override;
  Matrix apply_transpose(const Matrix& x) const override;
  Matrix apply_inverse(const Matrix& x) const override;
  Matrix apply_inverse_transpose(const Matrix& x) const override;
  Matrix dense() const override;
  OperatorPtr scaled_shifted(double scale, double shift) const override;

  const Vector& diagonal() const { return d_; }
  const Vector& rank_one_left() const { return u_; }
  const Vector& rank_one_right() const { return v_; }

 private:
  Vector d_, u_, v_;
  Vector dinv_u_;       // diag(d)^{-1} u
  Vector dinv_v_;       // diag(d)^{-1} v
  double capacitance_ = 0.0;
  bool invertible_ = false;
};

// Applies (diag(d) - u v^T)^{-1} x without forming the matrix. Throws
// SingularError when a diagonal entry vanishes or the capacitance does.
Matrix smw_apply_inverse(const Vector& d, const Vector& u, const Vector& v,
                         const Matrix& x);

// View of M^T sharing the underlying operator.
class TransposedOperator final : public LinearOperator {
 public:
  explicit TransposedOperator(OperatorPtr inner) : inner_(std::move(inner)) {}

  Index dim() const override { return inner_->dim(); }
  bool invertible() const override { return inner_->invertible(); }
  Matrix apply(const Matrix& x) const override { return inner_->apply_transpose(x); }
  Matrix apply_transpose(const Matrix& x) const override { return inner_->apply(x); }
  Matrix apply_inverse(const Matrix& x) const override {
    return inner_->apply_inverse_transpose(x);
  }
  Matrix apply_inverse_transpose(const Matrix& x) const override {
    return inner_->apply_inverse(x);
  }
  Matrix dense() const override { return inner_->dense().transpose(); }
  OperatorPtr scaled_shifted(double scale, double shift) const override {
    return std::make_shared<TransposedOperator>(
        inner_->scaled_shifted(scale, shift));
  }

 private:
  OperatorPtr inner_;
};

OperatorPtr transpose(OperatorPtr op);

// Possibly rectangular coupling matrix, stored dense or as left * right^T.
class CouplingMatrix {
 public:
  CouplingMatrix() = default;
  static CouplingMatrix from_dense(Matrix s);
  static CouplingMatrix from_factors(Matrix left, Matrix right);
  static CouplingMatrix zero(Index rows, Index cols);

  Index rows() const { return factored_ ? left_.rows() : dense_.rows(); }
  Index cols() const { return factored_ ? right_.rows() : dense_.cols(); }
  bool factored() const { return factored_; }
  Index factor_rank() const { return factored_ ? left_.cols() : -1; }

  Matrix apply(const Matrix& x) const;            // S * x
  Matrix apply_transpose(const Matrix& x) const;  // S^T * x
  Matrix dense() const;

  // c * S with the storage kind preserved.
  CouplingMatrix scaled(double c) const;

  double norm2() const;
  double norm_frobenius() const;

 private:
  bool factored_ = false;
  Matrix dense_;
  Matrix left_, right_;
};

}  // namespace ndre
