#include "ndre/dense_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace ndre {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
  }
}

double norm1(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

// Diagonal block boundaries of a real quasi-triangular Schur factor:
// a 2x2 block wherever the subdiagonal entry is nonzero.
std::vector<std::pair<Index, Index>> schur_blocks(const Matrix& t) {
  std::vector<std::pair<Index, Index>> blocks;
  const Index k = t.rows();
  Index i = 0;
  while (i < k) {
    const Index sz = (i + 1 < k && t(i + 1, i) != 0.0) ? 2 : 1;
    blocks.emplace_back(i, sz);
    i += sz;
  }
  return blocks;
}

// Local solve of Taa X + X Tbb = C for blocks of size at most 2x2 via the
// Kronecker system (I (x) Taa + Tbb^T (x) I) vec(X) = vec(C).
Matrix solve_local_block(const Matrix& taa, const Matrix& tbb, const Matrix& c,
                         double pivot_tol) {
  const Index na = taa.rows();
  const Index nb = tbb.rows();
  Matrix k = Matrix::Zero(na * nb, na * nb);
  for (Index j = 0; j < nb; ++j) {
    k.block(j * na, j * na, na, na) = taa;
    for (Index i = 0; i < nb; ++i) {
      k.block(i * na, j * na, na, na).diagonal().array() += tbb(j, i);
    }
  }
  Eigen::FullPivLU<Matrix> lu(k);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (min_pivot <= pivot_tol) {
    throw SingularError(
        "solve_sylvester: operands share an eigenvalue up to tolerance");
  }
  const Eigen::Map<const Vector> rhs(c.data(), na * nb);
  const Vector x = lu.solve(rhs);
  return Eigen::Map<const Matrix>(x.data(), na, nb);
}

}  // namespace

double lu_rcond_guarded(const Eigen::PartialPivLU<Matrix>& lu) {
  const Matrix& f = lu.matrixLU();
  if (f.rows() == 0) return 0.0;
  const double scale = f.cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) return 0.0;
  const double pivot_ratio = f.diagonal().cwiseAbs().minCoeff() / scale;
  const double estimate = lu.rcond();
  if (!std::isfinite(estimate)) return 0.0;
  return std::min(estimate, pivot_ratio);
}

Matrix solve_sylvester(const Matrix& a, const Matrix& b, const Matrix& c) {
  const Index k = a.rows();
  const Index l = b.rows();
  if (a.cols() != k || b.cols() != l || c.rows() != k || c.cols() != l) {
    throw std::invalid_argument("solve_sylvester: dimension mismatch");
  }
  if (k == 0 || l == 0) return Matrix::Zero(k, l);
  require_finite(a, "solve_sylvester");
  require_finite(b, "solve_sylvester");
  require_finite(c, "solve_sylvester");

  Eigen::RealSchur<Matrix> sa(a), sb(b);
  const Matrix& ta = sa.matrixT();
  const Matrix& tb = sb.matrixT();
  const Matrix& ua = sa.matrixU();
  const Matrix& ub = sb.matrixU();

  Matrix ct = ua.transpose() * c * ub;
  Matrix x = Matrix::Zero(k, l);
  const double pivot_tol = 1e-13 * std::max(norm1(ta) + norm1(tb), 1e-30);

  const auto row_blocks = schur_blocks(ta);
  const auto col_blocks = schur_blocks(tb);

  // Column blocks left to right (tb upper), row blocks bottom to top (ta
  // upper): every dependency is on already-computed entries.
  for (const auto& [jc, nb] : col_blocks) {
    Matrix rhs_col = ct.middleCols(jc, nb);
    if (jc > 0) {
      rhs_col.noalias() -= x.leftCols(jc) * tb.block(0, jc, jc, nb);
    }
    for (auto it = row_blocks.rbegin(); it != row_blocks.rend(); ++it) {
      const auto [ic, na] = *it;
      Matrix local = rhs_col.middleRows(ic, na);
      const Index below = k - ic - na;
      if (below > 0) {
        local.noalias() -=
            ta.block(ic, ic + na, na, below) * x.block(ic + na, jc, below, nb);
      }
      x.block(ic, jc, na, nb) = solve_local_block(
          ta.block(ic, ic, na, na), tb.block(jc, jc, nb, nb), local, pivot_tol);
    }
  }
  return ua * x * ub.transpose();
}

namespace {

// Pade numerator coefficients and 1-norm thresholds for degrees 3..13.
Matrix pade_uv_low(const Matrix& m, const std::vector<double>& b, Matrix& v) {
  const Index k = m.rows();
  const Matrix m2 = m * m;
  Matrix even = Matrix::Identity(k, k) * b[0];
  Matrix odd = Matrix::Identity(k, k) * b[1];
  Matrix power = Matrix::Identity(k, k);
  for (std::size_t j = 2; j < b.size(); j += 2) {
    power = power * m2;
    even.noalias() += b[j] * power;
    if (j + 1 < b.size()) odd.noalias() += b[j + 1] * power;
  }
  v = std::move(even);
  return m * odd;
}

}  // namespace

Matrix matrix_exponential(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("matrix_exponential: matrix must be square");
  }
  require_finite(m, "matrix_exponential");
  const Index k = m.rows();
  if (k == 0) return Matrix(0, 0);

  static const std::vector<double> b3 = {120, 60, 12, 1};
  static const std::vector<double> b5 = {30240, 15120, 3360, 420, 30, 1};
  static const std::vector<double> b7 = {17297280, 8648640, 1995840, 277200,
                                         25200,    1512,    56,      1};
  static const std::vector<double> b9 = {17643225600., 8821612800., 2075673600.,
                                         302702400.,   30270240.,   2162160.,
                                         110880.,      3960.,       90.,
                                         1.};
  static const std::vector<double> b13 = {
      64764752532480000., 32382376266240000., 7771770303897600.,
      1187353796428800.,  129060195264000.,   10559470521600.,
      670442572800.,      33522128640.,       1323241920.,
      40840800.,          960960.,            16380.,
      182.,               1.};

  const double nrm = norm1(m);
  Matrix u, v;
  int squarings = 0;

  if (nrm <= 1.495585217958292e-2) {
    u = pade_uv_low(m, b3, v);
  } else if (nrm <= 2.539398330063230e-1) {
    u = pade_uv_low(m, b5, v);
  } else if (nrm <= 9.504178996162932e-1) {
    u = pade_uv_low(m, b7, v);
  } else if (nrm <= 2.097847961257068) {
    u = pade_uv_low(m, b9, v);
  } else {
    const double theta13 = 5.371920351148152;
    double scaled_nrm = nrm;
    while (scaled_nrm > theta13) {
      scaled_nrm *= 0.5;
      ++squarings;
    }
    const Matrix ms = m / std::ldexp(1.0, squarings);
    const Matrix m2 = ms * ms;
    const Matrix m4 = m2 * m2;
    const Matrix m6 = m4 * m2;
    const Matrix id = Matrix::Identity(k, k);
    u = ms * (m6 * (b13[13] * m6 + b13[11] * m4 + b13[9] * m2) +
              b13[7] * m6 + b13[5] * m4 + b13[3] * m2 + b13[1] * id);
    v = m6 * (b13[12] * m6 + b13[10] * m4 + b13[8] * m2) + b13[6] * m6 +
        b13[4] * m4 + b13[2] * m2 + b13[0] * id;
  }

  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;
  if (!r.allFinite()) {
    std::ostringstream msg;
    msg << "matrix_exponential: overflow, input 1-norm " << nrm;
    throw std::overflow_error(msg.str());
  }
  return r;
}

NareResult solve_small_nare_newton(const Matrix& a, const Matrix& d,
                                   const Matrix& s, const Matrix& q,
                                   const Matrix& x_init, double tol,
                                   int itermax) {
  const Index k = a.rows();
  const Index l = d.rows();
  if (s.rows() != l || s.cols() != k || q.rows() != k || q.cols() != l) {
    throw std::invalid_argument("solve_small_nare_newton: dimension mismatch");
  }
  Matrix x = x_init.size() == 0 ? Matrix::Zero(k, l) : x_init;
  if (x.rows() != k || x.cols() != l) {
    throw std::invalid_argument("solve_small_nare_newton: bad initial guess shape");
  }

  double last_step = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= itermax; ++it) {
    const Matrix sx = s * x;              // l x l
    const Matrix xs = x * s;              // k x k
    const Matrix rhs = q - x * sx;        // q - x s x
    if (!rhs.allFinite()) {
      throw ConvergenceError(
          "solve_small_nare_newton: iterates overflowed, the equation may "
          "have no reachable root");
    }
    Matrix xn = solve_sylvester(a - xs, d - sx, rhs);
    last_step = (xn - x).norm();
    x = std::move(xn);
    if (last_step < tol) return {std::move(x), it};
  }
  std::ostringstream msg;
  msg << "solve_small_nare_newton: no convergence in " << itermax
      << " iterations, last step " << last_step;
  throw ConvergenceError(msg.str());
}

LowRankFactorPair truncated_svd_factor(const Matrix& y, double tol_rel,
                                       Index max_rank) {
  if (y.size() == 0) return zero_factors(y.rows(), y.cols());
  Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = tol_rel * sv(0);
  Index r = 0;
  while (r < sv.size() && sv(r) > cutoff && sv(r) > 0.0) ++r;
  if (max_rank >= 0) r = std::min(r, max_rank);
  const Vector roots = sv.head(r).cwiseSqrt();
  return {svd.matrixU().leftCols(r) * roots.asDiagonal(),
          svd.matrixV().leftCols(r) * roots.asDiagonal()};
}

LowRankFactorPair compress_factors(const LowRankFactorPair& x, double tol_rel,
                                   Index max_rank) {
  const Index r = x.rank();
  if (r == 0) return x;
  const Index r1 = std::min(r, x.Z1.rows());
  const Index r2 = std::min(r, x.Z2.rows());
  Eigen::HouseholderQR<Matrix> q1(x.Z1), q2(x.Z2);
  const Matrix rfac1 =
      q1.matrixQR().topRows(r1).triangularView<Eigen::Upper>();
  const Matrix rfac2 =
      q2.matrixQR().topRows(r2).triangularView<Eigen::Upper>();

  const Matrix core = rfac1 * rfac2.transpose();  // r1 x r2
  Eigen::BDCSVD<Matrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return zero_factors(x.Z1.rows(), x.Z2.rows());
  const double cutoff = tol_rel * sv(0);
  Index keep = 0;
  while (keep < sv.size() && sv(keep) > cutoff && sv(keep) > 0.0) ++keep;
  if (max_rank >= 0) keep = std::min(keep, max_rank);
  const Vector roots = sv.head(keep).cwiseSqrt();

  Matrix thin1 = Matrix::Identity(x.Z1.rows(), r1);
  thin1.applyOnTheLeft(q1.householderQ());
  Matrix thin2 = Matrix::Identity(x.Z2.rows(), r2);
  thin2.applyOnTheLeft(q2.householderQ());
  return {thin1 * (svd.matrixU().leftCols(keep) * roots.asDiagonal()),
          thin2 * (svd.matrixV().leftCols(keep) * roots.asDiagonal())};
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace ndre
