#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "ndre/krylov.hpp"
#include "ndre/operators.hpp"
#include "ndre/problem.hpp"

using ndre::BlockArnoldiState;
using ndre::CouplingMatrix;
using ndre::DenseOperator;
using ndre::EBAState;
using ndre::Index;
using ndre::LowRankFactorPair;
using ndre::Matrix;
using ndre::NDREProblem;
using ndre::SingularError;
using ndre::Vector;

namespace {

Matrix random_matrix(Index rows, Index cols, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

// Random dense matrix made safely invertible by a diagonal shift.
Matrix shifted_random(Index n, unsigned seed) {
  Matrix m = random_matrix(n, n, seed);
  m.diagonal().array() += static_cast<double>(n);
  return m;
}

// Eigenvalues spread over a wide range (Gershgorin keeps them off zero), so
// inverse images genuinely extend the forward Krylov space.  A dominant
// uniform shift would make A^{-1}V numerically dependent on the forward
// directions and defeat the point of the extended process.
Matrix spread_spectrum(Index n, unsigned seed) {
  Matrix m = 0.05 * random_matrix(n, n, seed);
  m.diagonal() += Vector::LinSpaced(n, 2.0, static_cast<double>(n) + 1.0);
  return m;
}

double orthonormality_defect(const Matrix& basis) {
  return (basis.transpose() * basis -
          Matrix::Identity(basis.cols(), basis.cols()))
      .norm();
}

}  // namespace

TEST_CASE("extended init deflates repeated directions") {
  // Identity operator: the inverse images duplicate the start block.
  DenseOperator id_op(Matrix::Identity(8, 8));
  const EBAState st = eba_init(id_op, Matrix::Identity(8, 2));
  CHECK(st.blocks.size() == 1);
  CHECK(st.blocks[0].cols() == 2);
  CHECK(st.forward_widths[0] == 2);
  REQUIRE(st.deflation_log.size() == 1);
  CHECK(st.deflation_log[0].first == 0);
  CHECK(st.deflation_log[0].second == 2);
  CHECK(st.m == 0);
  CHECK(st.t_bar.cols() == 0);

  // A diagonal operator maps e1 to a multiple of itself in both directions.
  DenseOperator diag_op(Matrix(Vector::LinSpaced(4, 1.0, 4.0).asDiagonal()));
  const EBAState st1 = eba_init(diag_op, Matrix::Identity(4, 1));
  CHECK(st1.blocks[0].cols() == 1);
  REQUIRE(st1.deflation_log.size() == 1);
  CHECK(st1.deflation_log[0].second == 1);
}

TEST_CASE("extended init on the transport operator") {
  const NDREProblem prob = ndre::build_transport_problem({100, 0.5, 0.5});
  const EBAState st = eba_init(*prob.A, prob.F);
  REQUIRE(st.blocks.size() == 1);
  const Matrix& v1 = st.blocks[0];
  CHECK(v1.cols() == 2);
  CHECK(orthonormality_defect(v1) <= 1e-12);

  // lambda reconstructs the starting data in the basis.
  Matrix start(100, 2);
  start.col(0) = prob.F;
  start.col(1) = prob.A->apply_inverse(prob.F);
  CHECK((v1 * st.lambda - start).norm() <= 1e-10 * start.norm());
}

TEST_CASE("extended init validates its inputs") {
  Matrix singular = Matrix::Zero(4, 4);
  singular(0, 0) = 1.0;
  CHECK_THROWS_AS(eba_init(DenseOperator(singular), Matrix::Ones(4, 1)),
                  SingularError);

  DenseOperator id_op(Matrix::Identity(4, 4));
  CHECK_THROWS_AS(eba_init(id_op, Matrix::Zero(4, 1)), std::invalid_argument);
  CHECK_THROWS_AS(eba_init(id_op, Matrix::Ones(3, 1)), std::invalid_argument);
}

TEST_CASE("extended process satisfies the projection identities") {
  const Index n = 60;
  const Matrix a = spread_spectrum(n, 5);
  DenseOperator op(a);
  EBAState st = eba_init(op, random_matrix(n, 2, 6));
  for (int i = 0; i < 4; ++i) st = eba_step(st, op);
  CHECK(st.m == 4);
  REQUIRE(st.blocks.size() == 5);

  const Matrix basis = st.basis_dense();
  CHECK(orthonormality_defect(basis) <= 1e-12 * basis.cols());

  const Index k = st.t_bar.cols();
  const Matrix vm = basis.leftCols(k);
  CHECK((a * vm - basis * st.t_bar).norm() <= 1e-10 * a.norm());
  CHECK((op.apply_inverse(vm) - basis * st.l_bar).norm() <=
        1e-10 * op.apply_inverse(vm).norm());

  // Block upper Hessenberg: column block j has nothing below block row j+1,
  // and t_next is the bottom-right coupling block.
  std::vector<Index> prefix{0};
  for (const Matrix& b : st.blocks) prefix.push_back(prefix.back() + b.cols());
  for (std::size_t j = 0; j + 1 < st.blocks.size(); ++j) {
    const Index row_end = prefix[j + 2];
    if (row_end >= st.t_bar.rows()) continue;
    CHECK(st.t_bar
              .block(row_end, prefix[j], st.t_bar.rows() - row_end,
                     st.blocks[j].cols())
              .cwiseAbs()
              .maxCoeff() <= 1e-10 * a.norm());
  }
  const Index wlast = st.blocks.back().cols();
  const Index wprev = st.blocks[st.blocks.size() - 2].cols();
  CHECK((st.t_next - st.t_bar.bottomRightCorner(wlast, wprev)).norm() == 0.0);
}

TEST_CASE("extended process on the transport operator") {
  const NDREProblem prob = ndre::build_transport_problem({100, 0.5, 0.3});
  EBAState st = eba_init(*prob.A, prob.F);
  st = eba_step(st, *prob.A);
  st = eba_step(st, *prob.A);
  const Matrix a = prob.A->dense();
  const Matrix basis = st.basis_dense();
  const Matrix vm = basis.leftCols(st.t_bar.cols());
  CHECK((a * vm - basis * st.t_bar).norm() / a.norm() <= 1e-10);
  CHECK(orthonormality_defect(basis) <= 1e-11);
}

TEST_CASE("plain process tridiagonalizes symmetric operators") {
  const Matrix g = random_matrix(20, 20, 11);
  const Matrix a = 0.5 * (g + g.transpose());
  DenseOperator op(a);
  BlockArnoldiState st = block_arnoldi_init(op, random_matrix(20, 2, 12));
  st = block_arnoldi_step(st, op);

  // After one step the leading square of t_bar is the direct projection.
  const Matrix v1 = st.blocks[0];
  CHECK((st.t_bar.topLeftCorner(2, 2) - v1.transpose() * a * v1).norm() <=
        1e-13 * a.norm());

  for (int i = 0; i < 3; ++i) st = block_arnoldi_step(st, op);
  const Matrix basis = st.basis_dense();
  CHECK(orthonormality_defect(basis) <= 1e-12 * basis.cols());
  CHECK((a * basis.leftCols(st.t_bar.cols()) - basis * st.t_bar).norm() <=
        1e-10 * a.norm());
  CHECK(st.l_bar.size() == 0);

  // Symmetry forces the band structure: widths stay 2, so block (i, j)
  // vanishes whenever |i - j| > 1.
  for (Index bi = 0; bi * 2 < st.t_bar.rows(); ++bi) {
    for (Index bj = 0; bj * 2 < st.t_bar.cols(); ++bj) {
      if (bi > bj + 1 || bj > bi + 1) {
        CHECK(st.t_bar.block(bi * 2, bj * 2, 2, 2).cwiseAbs().maxCoeff() <=
              1e-10 * a.norm());
      }
    }
  }
}

TEST_CASE("plain process keeps random bases orthonormal") {
  const Matrix a = shifted_random(8, 21);
  DenseOperator op(a);
  BlockArnoldiState st = block_arnoldi_init(op, random_matrix(8, 2, 22));
  while (!st.breakdown && st.basis_cols() < 8) st = block_arnoldi_step(st, op);
  CHECK(orthonormality_defect(st.basis_dense()) <= 1e-12 * 8);
  CHECK_THROWS_AS(eba_step(st, op), std::logic_error);
}

TEST_CASE("invariant subspace stops the recursion") {
  Matrix a = Matrix::Zero(6, 6);
  a.topLeftCorner(2, 2) << 2.0, 1.0, 0.0, 4.0;
  a.diagonal().tail(4) = Vector::LinSpaced(4, 5.0, 8.0);
  DenseOperator op(a);
  Matrix v = Matrix::Zero(6, 1);
  v(0) = 1.0;
  v(1) = 1.0;

  EBAState st = eba_init(op, v);
  REQUIRE(st.blocks[0].cols() == 2);  // the inverse image leaves span{e1,e2}

  st = eba_step(st, op);
  CHECK(st.breakdown);
  CHECK(st.m == 1);
  CHECK(st.blocks.size() == 1);
  CHECK(st.t_bar.rows() == 2);
  CHECK(st.t_bar.cols() == 2);
  CHECK(st.t_next.rows() == 0);

  // On the invariant subspace the projection is exact.
  const Matrix basis = st.basis_dense();
  CHECK((a * basis - basis * st.t_bar).norm() <= 1e-12 * a.norm());
  CHECK_THROWS_AS(eba_step(st, op), std::logic_error);
}

TEST_CASE("deflation keeps the step width bounded") {
  const Matrix a = shifted_random(30, 41);
  DenseOperator op(a);
  Matrix v(30, 4);
  v.leftCols(2) = random_matrix(30, 2, 42);
  v.rightCols(2) = v.leftCols(2);  // rank-deficient start, 2s = 8 nominal
  EBAState st = eba_init(op, v);
  CHECK(st.blocks[0].cols() <= 8);
  CHECK(!st.deflation_log.empty());
  for (int i = 0; i < 3; ++i) st = eba_step(st, op);
  for (const Matrix& b : st.blocks) CHECK(b.cols() <= 8);
  CHECK(orthonormality_defect(st.basis_dense()) <= 1e-11);
}

TEST_CASE("projection reproduces the full problem on the whole space") {
  const Index n = 10;
  const Matrix a = shifted_random(n, 51);
  const Matrix d = shifted_random(n, 52);
  const Matrix s = random_matrix(n, n, 53);
  const Matrix f = random_matrix(n, 2, 54);
  const Matrix g = random_matrix(n, 2, 55);
  const LowRankFactorPair x0{random_matrix(n, 2, 56), random_matrix(n, 2, 57)};
  const NDREProblem prob{std::make_shared<DenseOperator>(a),
                         std::make_shared<DenseOperator>(d),
                         CouplingMatrix::from_dense(s),
                         f,
                         g,
                         x0};

  EBAState sta = eba_init(*prob.A, prob.F);
  const ndre::OperatorPtr dt = ndre::transpose(prob.D);
  EBAState std_state = eba_init(*dt, prob.G);
  int guard = 0;
  while (!sta.breakdown && sta.t_bar.cols() < n && ++guard < 12) {
    sta = eba_step(sta, *prob.A);
  }
  guard = 0;
  while (!std_state.breakdown && std_state.t_bar.cols() < n && ++guard < 12) {
    std_state = eba_step(std_state, *dt);
  }
  REQUIRE(sta.t_bar.cols() == n);
  REQUIRE(std_state.t_bar.cols() == n);

  const ndre::ProjectedNDRE proj = projected_matrices(sta, std_state, prob);
  const Matrix va = sta.basis_dense().leftCols(n);
  const Matrix wd = std_state.basis_dense().leftCols(n);
  CHECK((va * proj.T_A * va.transpose() - a).norm() <= 1e-9 * a.norm());
  CHECK((wd * proj.T_D * wd.transpose() - d).norm() <= 1e-9 * d.norm());
  CHECK((wd * proj.S_m * va.transpose() - s).norm() <= 1e-9 * s.norm());
  CHECK((va * proj.F_m - f).norm() <= 1e-10 * f.norm());
  CHECK((wd * proj.G_m - g).norm() <= 1e-10 * g.norm());
  CHECK((va * proj.Y0 * wd.transpose() - x0.dense()).norm() <=
        1e-9 * x0.dense().norm());
}

TEST_CASE("projection preserves rank-one coupling and zero initial data") {
  const NDREProblem prob = ndre::build_transport_problem({100, 0.9, 0.1});
  EBAState sta = eba_init(*prob.A, prob.F);
  const ndre::OperatorPtr dt = ndre::transpose(prob.D);
  EBAState std_state = eba_init(*dt, prob.G);
  for (int i = 0; i < 5; ++i) {
    sta = eba_step(sta, *prob.A);
    std_state = eba_step(std_state, *dt);
  }
  const ndre::ProjectedNDRE proj = projected_matrices(sta, std_state, prob);
  const Index ka = sta.t_bar.cols();
  const Index kd = std_state.t_bar.cols();
  CHECK(proj.T_A.rows() == ka);
  CHECK(proj.T_D.rows() == kd);
  CHECK(proj.S_m.rows() == kd);
  CHECK(proj.S_m.cols() == ka);
  CHECK(proj.F_m.rows() == ka);
  CHECK(proj.G_m.rows() == kd);
  CHECK(proj.Y0.norm() == 0.0);

  Eigen::JacobiSVD<Matrix> svd(proj.S_m);
  CHECK(svd.singularValues()(1) <= 1e-12 * svd.singularValues()(0));

  const Matrix va = sta.basis_dense().leftCols(ka);
  CHECK((proj.F_m - va.transpose() * prob.F).norm() <= 1e-12);
}

TEST_CASE("projection validates dimensions") {
  const NDREProblem small = ndre::build_transport_problem({10, 0.5, 0.0});
  const NDREProblem large = ndre::build_transport_problem({12, 0.5, 0.0});
  EBAState sta = eba_init(*small.A, small.F);
  const ndre::OperatorPtr dt = ndre::transpose(small.D);
  EBAState std_state = eba_init(*dt, small.G);
  CHECK_THROWS_AS(projected_matrices(sta, std_state, small), std::logic_error);

  sta = eba_step(sta, *small.A);
  std_state = eba_step(std_state, *dt);
  CHECK_THROWS_AS(projected_matrices(sta, std_state, large),
                  std::invalid_argument);
  CHECK_NOTHROW(projected_matrices(sta, std_state, small));
}
