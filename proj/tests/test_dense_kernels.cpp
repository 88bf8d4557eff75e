#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <ndre/dense_kernels.hpp>
#include <ndre/problem.hpp>

#include <cmath>
#include <random>

using namespace ndre;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

// Kronecker-system oracle for A X + X B = C, independent of the Schur path.
Matrix sylvester_kron_oracle(const Matrix& a, const Matrix& b, const Matrix& c) {
  const Index k = a.rows();
  const Index l = b.rows();
  Matrix big = Matrix::Zero(k * l, k * l);
  for (Index j = 0; j < l; ++j) {
    big.block(j * k, j * k, k, k) = a;
    for (Index i = 0; i < l; ++i) {
      big.block(i * k, j * k, k, k).diagonal().array() += b(j, i);
    }
  }
  const Eigen::Map<const Vector> rhs(c.data(), k * l);
  const Vector x = big.partialPivLu().solve(rhs);
  return Eigen::Map<const Matrix>(x.data(), k, l);
}

}  // namespace

TEST_CASE("sylvester closed forms") {
  const Matrix id = Matrix::Identity(3, 3);
  const Matrix x = solve_sylvester(id, id, 2.0 * id);
  CHECK((x - id).norm() <= 1e-14);

  Matrix a = Vector::LinSpaced(2, 1.0, 2.0).asDiagonal();
  Matrix b = Vector::LinSpaced(2, 3.0, 4.0).asDiagonal();
  const Matrix sol = solve_sylvester(a, b, Matrix::Ones(2, 2));
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j)
      CHECK(sol(i, j) == doctest::Approx(1.0 / (a(i, i) + b(j, j))).epsilon(1e-14));
}

TEST_CASE("sylvester matches kronecker oracle on random instances") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Matrix a = random_matrix(20, 20, seed) + 8.0 * Matrix::Identity(20, 20);
    const Matrix b = random_matrix(15, 15, seed + 100);
    const Matrix c = random_matrix(20, 15, seed + 200);
    const Matrix x = solve_sylvester(a, b, c);
    const Matrix oracle = sylvester_kron_oracle(a, b, c);
    CHECK((x - oracle).norm() <= 1e-10 * oracle.norm());
    CHECK((a * x + x * b - c).norm() <=
          1e-10 * (a.norm() + b.norm()) * x.norm());
  }
}

TEST_CASE("sylvester rejects shared eigenvalues") {
  Matrix a(1, 1), b(1, 1), c(1, 1);
  a << 1.0;
  b << -1.0;
  c << 1.0;
  CHECK_THROWS_AS(solve_sylvester(a, b, c), SingularError);

  // Jordan blocks at 0 on both sides: the pencil is singular.
  Matrix ja(2, 2), jb(2, 2);
  ja << 0, 1, 0, 0;
  jb << 0, 0, 1e-20, 0;
  CHECK_THROWS_AS(solve_sylvester(ja, jb, Matrix::Ones(2, 2)), SingularError);
}

TEST_CASE("matrix exponential closed forms") {
  CHECK((matrix_exponential(Matrix::Zero(4, 4)) - Matrix::Identity(4, 4)).norm() <=
        1e-15);

  Matrix diag = Matrix::Zero(2, 2);
  diag(0, 0) = std::log(2.0);
  diag(1, 1) = -1.0;
  const Matrix e = matrix_exponential(diag);
  CHECK(e(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(e(1, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(std::abs(e(0, 1)) <= 1e-16);

  Matrix nilp = Matrix::Zero(2, 2);
  nilp(0, 1) = 1.0;
  const Matrix en = matrix_exponential(nilp);
  CHECK(en(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(en(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(en(1, 0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("matrix exponential vs eigendecomposition on symmetric inputs") {
  for (double scale : {0.1, 1.0, 7.0, 40.0}) {
    const Matrix g = random_matrix(12, 12, 17);
    Matrix m = 0.5 * (g + g.transpose());
    m *= scale / spectral_norm(m);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    const Matrix oracle = eig.eigenvectors() *
                          eig.eigenvalues().array().exp().matrix().asDiagonal() *
                          eig.eigenvectors().transpose();
    const Matrix e = matrix_exponential(m);
    CHECK((e - oracle).norm() <= 1e-11 * oracle.norm());
  }
}

TEST_CASE("matrix exponential inverse identity") {
  for (std::uint64_t seed : {5u, 6u}) {
    Matrix m = random_matrix(30, 30, seed);
    m *= 5.0 / spectral_norm(m);
    const Matrix prod = matrix_exponential(m) * matrix_exponential(-m);
    CHECK((prod - Matrix::Identity(30, 30)).norm() <= 1e-10);
  }
}

TEST_CASE("newton solves the scalar riccati benchmark") {
  Matrix a(1, 1), d(1, 1), s(1, 1), q(1, 1);
  a << 2.0;
  d << 2.0;
  s << 1.0;
  q << 3.0;
  // Roots of x^2 - 4x + 3 are 1 and 3; the iteration from 0 picks 1.
  const auto result =
      solve_small_nare_newton(a, d, s, q, Matrix(), 1e-13, 30);
  CHECK(result.X(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(result.iterations <= 8);
}

TEST_CASE("newton with zero quadratic term reduces to one sylvester solve") {
  const Matrix a = random_matrix(5, 5, 31) + 6.0 * Matrix::Identity(5, 5);
  const Matrix d = random_matrix(4, 4, 32) + 6.0 * Matrix::Identity(4, 4);
  const Matrix q = random_matrix(5, 4, 33);
  const Matrix s = Matrix::Zero(4, 5);
  const auto result = solve_small_nare_newton(a, d, s, q, Matrix(), 1e-13, 5);
  const Matrix expected = solve_sylvester(a, d, q);
  CHECK((result.X - expected).norm() <= 1e-12 * expected.norm());
  CHECK(result.iterations <= 2);
}

TEST_CASE("newton iterates climb monotonically to the transport steady state") {
  const auto problem = build_transport_problem({8, 0.5, 0.5});
  const Matrix a = problem.A->dense();
  const Matrix d = problem.D->dense();
  const Matrix s = problem.S.dense();
  const Matrix q = problem.F * problem.G.transpose();

  // Replay the Newton recurrence to observe the iterates.
  Matrix x = Matrix::Zero(8, 8);
  Matrix prev = x;
  for (int it = 0; it < 25; ++it) {
    const Matrix sx = s * x;
    const Matrix xs = x * s;
    x = solve_sylvester(a - xs, d - sx, q - x * sx);
    CHECK(((x - prev).array() >= -1e-10).all());
    prev = x;
  }
  const auto direct = solve_small_nare_newton(a, d, s, q, Matrix(), 1e-13, 40);
  CHECK((direct.X - x).norm() <= 1e-10 * x.norm());
  CHECK((direct.X.array() >= 0.0).all());

  // Residual of the steady-state equation.
  const Matrix res = -a * direct.X - direct.X * d + direct.X * s * direct.X + q;
  CHECK(res.norm() <= 1e-11 * q.norm());
}

TEST_CASE("newton reports non-convergence with a tight budget") {
  Matrix a(1, 1), d(1, 1), s(1, 1), q(1, 1);
  a << 2.0;
  d << 2.0;
  s << 1.0;
  q << 3.0;
  CHECK_THROWS_AS(solve_small_nare_newton(a, d, s, q, Matrix(), 1e-13, 2),
                  ConvergenceError);
}

TEST_CASE("truncated svd factorization") {
  const Matrix u = random_matrix(30, 2, 41);
  const Matrix v = random_matrix(20, 2, 42);
  const Matrix y = u * v.transpose();
  const auto f = truncated_svd_factor(y, 1e-10);
  CHECK(f.rank() == 2);
  CHECK((f.dense() - y).norm() <= 1e-12 * y.norm());

  CHECK(truncated_svd_factor(Matrix::Zero(5, 3), 1e-12).rank() == 0);
  CHECK(truncated_svd_factor(Matrix::Identity(3, 3), 1e-12).rank() == 3);

  // Constructed spectrum (1, 1e-3, 1e-15): tol 1e-8 keeps exactly two.
  Matrix core = Matrix::Zero(3, 3);
  core(0, 0) = 1.0;
  core(1, 1) = 1e-3;
  core(2, 2) = 1e-15;
  Eigen::HouseholderQR<Matrix> qra(random_matrix(30, 3, 43));
  Eigen::HouseholderQR<Matrix> qrb(random_matrix(20, 3, 44));
  const Matrix qa = qra.householderQ() * Matrix::Identity(30, 3);
  const Matrix qb = qrb.householderQ() * Matrix::Identity(20, 3);
  const Matrix constructed = qa * core * qb.transpose();
  CHECK(truncated_svd_factor(constructed, 1e-8).rank() == 2);

  // Rank cap: best rank-1 approximation error is the second singular value.
  const auto capped = truncated_svd_factor(constructed, 1e-16, 1);
  CHECK(capped.rank() == 1);
  CHECK(spectral_norm(capped.dense() - constructed) ==
        doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("factor compression without densifying") {
  const Matrix z1 = random_matrix(40, 6, 51);
  Matrix z2 = random_matrix(25, 6, 52);
  // Two terms sharing the same right vector merge into one outer product.
  z2.col(5) = z2.col(0);
  LowRankFactorPair x{z1, z2};

  const auto compressed = compress_factors(x, 1e-13);
  CHECK(compressed.rank() == 5);
  CHECK((compressed.dense() - x.dense()).norm() <= 1e-11 * x.dense().norm());

  // An exactly repeated outer product must drop rank.
  Matrix w1(40, 4), w2(25, 4);
  w1 << z1.col(0), z1.col(1), z1.col(0), z1.col(1);
  w2 << z2.col(0), z2.col(1), z2.col(0), z2.col(1);
  const auto dropped = compress_factors({w1, w2}, 1e-12);
  CHECK(dropped.rank() == 2);
  CHECK((dropped.dense() - w1 * w2.transpose()).norm() <=
        1e-11 * (w1 * w2.transpose()).norm());

  const auto empty = compress_factors(zero_factors(10, 8), 1e-12);
  CHECK(empty.rank() == 0);
  CHECK(empty.Z1.rows() == 10);
  CHECK(empty.Z2.rows() == 8);
}

TEST_CASE("factored norms via gram products") {
  const Matrix z1 = random_matrix(50, 3, 61);
  const Matrix z2 = random_matrix(35, 3, 62);
  const LowRankFactorPair x{z1, z2};
  CHECK(factored_frobenius_norm(x) ==
        doctest::Approx(x.dense().norm()).epsilon(1e-12));

  const LowRankFactorPair y{random_matrix(50, 2, 63), random_matrix(35, 2, 64)};
  CHECK(factored_frobenius_distance(x, y) ==
        doctest::Approx((x.dense() - y.dense()).norm()).epsilon(1e-11));
  CHECK(factored_frobenius_distance(x, x) <= 1e-7 * factored_frobenius_norm(x));
  CHECK(factored_frobenius_norm(zero_factors(5, 5)) == 0.0);
}

TEST_CASE("spectral norm helper") {
  const Matrix m = random_matrix(18, 11, 71);
  Eigen::JacobiSVD<Matrix> svd(m);
  CHECK(spectral_norm(m) == doctest::Approx(svd.singularValues()(0)).epsilon(1e-13));
  CHECK(spectral_norm(Matrix::Zero(3, 3)) == 0.0);
}
