#include "ndre/operators.hpp"

#include <cmath>
#include <utility>

#include "ndre/dense_kernels.hpp"

namespace ndre {

namespace {

void require_square(Index rows, Index cols, const char* what) {
  if (rows != cols) {
    throw std::invalid_argument(std::string(what) + ": matrix must be square");
  }
}

}  // namespace

DenseOperator::DenseOperator(Matrix m) : m_(std::move(m)) {
  require_square(m_.rows(), m_.cols(), "DenseOperator");
  lu_.compute(m_);
  invertible_ = m_.rows() > 0 && lu_rcond_guarded(lu_) > 1e-14;
}

Matrix DenseOperator::apply(const Matrix& x) const { return m_ * x; }

Matrix DenseOperator::apply_transpose(const Matrix& x) const {
  return m_.transpose() * x;
}

Matrix DenseOperator::apply_inverse(const Matrix& x) const {
  if (!invertible_) throw SingularError("dense operator is numerically singular");
  return lu_.solve(x);
}

Matrix DenseOperator::apply_inverse_transpose(const Matrix& x) const {
  if (!invertible_) throw SingularError("dense operator is numerically singular");
  return lu_.transpose().solve(x);
}

OperatorPtr DenseOperator::scaled_shifted(double scale, double shift) const {
  Matrix s = scale * m_;
  s.diagonal().array() += shift;
  return std::make_shared<DenseOperator>(std::move(s));
}

SparseOperator::SparseOperator(SparseMatrix m) : m_(std::move(m)) {
  require_square(m_.rows(), m_.cols(), "SparseOperator");
  m_.makeCompressed();
  lu_.compute(m_);
  invertible_ = lu_.info() == Eigen::Success;
}

Matrix SparseOperator::apply(const Matrix& x) const { return m_ * x; }

Matrix SparseOperator::apply_transpose(const Matrix& x) const {
  return m_.transpose() * x;
}

Matrix SparseOperator::apply_inverse(const Matrix& x) const {
  if (!invertible_) throw SingularError("sparse operator is numerically singular");
  return lu_.solve(x);
}

Matrix SparseOperator::apply_inverse_transpose(const Matrix& x) const {
  if (!invertible_) throw SingularError("sparse operator is numerically singular");
  return lu_.transpose().solve(x);
}

OperatorPtr SparseOperator::scaled_shifted(double scale, double shift) const {
  SparseMatrix s = scale * m_;
  SparseMatrix eye(m_.rows(), m_.cols());
  eye.setIdentity();
  s += shift * eye;
  return std::make_shared<SparseOperator>(std::move(s));
}

DiagPlusRankOne::DiagPlusRankOne(Vector d, Vector u, Vector v)
    : d_(std::move(d)), u_(std::move(u)), v_(std::move(v)) {
  if (u_.size() != d_.size() || v_.size() != d_.size()) {
    throw std::invalid_argument("DiagPlusRankOne: size mismatch");
  }
  const double dmax = d_.size() ? d_.cwiseAbs().maxCoeff() : 0.0;
  if (d_.size() == 0 || d_.cwiseAbs().minCoeff() <= 1e-15 * std::max(1.0, dmax)) {
    throw SingularError("DiagPlusRankOne: vanishing diagonal entry");
  }
  dinv_u_ = u_.cwiseQuotient(d_);
  dinv_v_ = v_.cwiseQuotient(d_);
  capacitance_ = 1.0 - v_.dot(dinv_u_);
  const double scale = 1.0 + v_.cwiseAbs().dot(dinv_u_.cwiseAbs());
  if (std::abs(capacitance_) <= 1e-14 * scale) {
    throw SingularError("DiagPlusRankOne: vanishing capacitance 1 - v' inv(diag(d)) u");
  }
  invertible_ = true;
}

Matrix DiagPlusRankOne::apply(const Matrix& x) const {
  return d_.asDiagonal() * x - u_ * (v_.transpose() * x);
}

Matrix DiagPlusRankOne::apply_transpose(const Matrix& x) const {
  return d_.asDiagonal() * x - v_ * (u_.transpose() * x);
}

Matrix DiagPlusRankOne::apply_inverse(const Matrix& x) const {
  // (D - u v^T)^{-1} = D^{-1} + D^{-1} u v^T D^{-1} / (1 - v^T D^{-1} u)
  Matrix y = d_.cwiseInverse().asDiagonal() * x;
  y.noalias() += dinv_u_ * ((v_.transpose() * y) / capacitance_);
  return y;
}

Matrix DiagPlusRankOne::apply_inverse_transpose(const Matrix& x) const {
  Matrix y = d_.cwiseInverse().asDiagonal() * x;
  y.noalias() += dinv_v_ * ((u_.transpose() * y) / capacitance_);
  return y;
}

Matrix DiagPlusRankOne::dense() const {
  Matrix m = Matrix(d_.asDiagonal());
  m.noalias() -= u_ * v_.transpose();
  return m;
}

OperatorPtr DiagPlusRankOne::scaled_shifted(double scale, double shift) const {
  Vector d = scale * d_;
  d.array() += shift;
  return std::make_shared<DiagPlusRankOne>(std::move(d), scale * u_, v_);
}

Matrix smw_apply_inverse(const Vector& d, const Vector& u, const Vector& v,
                         const Matrix& x) {
  if (u.size() != d.size() || v.size() != d.size() || x.rows() != d.size()) {
    throw std::invalid_argument("smw_apply_inverse: size mismatch");
  }
  const double dmax = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
  if (d.size() == 0 || d.cwiseAbs().minCoeff() <= 1e-15 * std::max(1.0, dmax)) {
    throw SingularError("smw_apply_inverse: zero diagonal entry");
  }
  const Vector dinv_u = u.cwiseQuotient(d);
  const double capacitance = 1.0 - v.dot(dinv_u);
  const double scale = 1.0 + v.cwiseAbs().dot(dinv_u.cwiseAbs());
  if (std::abs(capacitance) <= 1e-14 * scale) {
    throw SingularError("smw_apply_inverse: vanishing capacitance");
  }
  Matrix y = d.cwiseInverse().asDiagonal() * x;
  y.noalias() += dinv_u * ((v.transpose() * y) / capacitance);
  return y;
}

OperatorPtr transpose(OperatorPtr op) {
  return std::make_shared<TransposedOperator>(std::move(op));
}

CouplingMatrix CouplingMatrix::from_dense(Matrix s) {
  CouplingMatrix c;
  c.factored_ = false;
  c.dense_ = std::move(s);
  return c;
}

CouplingMatrix CouplingMatrix::from_factors(Matrix left, Matrix right) {
  if (left.cols() != right.cols()) {
    throw std::invalid_argument("CouplingMatrix: factor rank mismatch");
  }
  CouplingMatrix c;
  c.factored_ = true;
  c.left_ = std::move(left);
  c.right_ = std::move(right);
  return c;
}

CouplingMatrix CouplingMatrix::zero(Index rows, Index cols) {
  return from_factors(Matrix::Zero(rows, 0), Matrix::Zero(cols, 0));
}

CouplingMatrix CouplingMatrix::scaled(double c) const {
  if (factored_) return from_factors(left_ * c, right_);
  return from_dense(dense_ * c);
}

Matrix CouplingMatrix::apply(const Matrix& x) const {
  if (factored_) return left_ * (right_.transpose() * x);
  return dense_ * x;
}

Matrix CouplingMatrix::apply_transpose(const Matrix& x) const {
  if (factored_) return right_ * (left_.transpose() * x);
  return dense_.transpose() * x;
}

Matrix CouplingMatrix::dense() const {
  if (factored_) return left_ * right_.transpose();
  return dense_;
}

double CouplingMatrix::norm2() const {
  if (rows() == 0 || cols() == 0) return 0.0;
  if (factored_) {
    const Index r = left_.cols();
    if (r == 0) return 0.0;
    // sigma_max(L R^T) = sigma_max(Rl Rr^T) with Rl, Rr the thin QR factors.
    Eigen::HouseholderQR<Matrix> ql(left_), qr(right_);
    const Matrix rl = ql.matrixQR()
                          .topRows(std::min(r, left_.rows()))
                          .triangularView<Eigen::Upper>();
    const Matrix rr = qr.matrixQR()
                          .topRows(std::min(r, right_.rows()))
                          .triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(rl * rr.transpose());
    return svd.singularValues()(0);
  }
  Eigen::BDCSVD<Matrix> svd(dense_);
  return svd.singularValues()(0);
}

double CouplingMatrix::norm_frobenius() const {
  if (factored_) return factored_frobenius_norm({left_, right_});
  return dense_.norm();
}

}  // namespace ndre
