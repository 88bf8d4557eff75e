#include "ndre/bdf_newton.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "ndre/dense_kernels.hpp"
#include "ndre/krylov.hpp"
#include "ndre/projected_integrators.hpp"

namespace ndre {

ShiftedOperator::ShiftedOperator(OperatorPtr base, double scale, double shift,
                                 Matrix u, Matrix v)
    : base_(std::move(base)),
      scale_(scale),
      shift_(shift),
      u_(std::move(u)),
      v_(std::move(v)) {
  if (!base_) {
    throw std::invalid_argument("ShiftedOperator: base operator is not set");
  }
  const Index n = base_->dim();
  if (u_.rows() != n || v_.rows() != n || u_.cols() != v_.cols()) {
    throw std::invalid_argument(
        "ShiftedOperator: correction factors do not fit the base operator");
  }
  try {
    shifted_ = (scale_ == 1.0 && shift_ == 0.0)
                   ? base_
                   : base_->scaled_shifted(scale_, shift_);
  } catch (const SingularError&) {
    // The shifted base cannot be built in invertible form (a structured
    // operator rejected the combination). Forward products still work.
    shifted_ = nullptr;
  }
  if (!shifted_ || !shifted_->invertible()) return;
  const Index r = u_.cols();
  if (r == 0) {
    invertible_ = true;
    return;
  }
  minv_u_ = shifted_->apply_inverse(u_);
  mtinv_v_ = shifted_->apply_inverse_transpose(v_);
  cap_lu_.compute(Matrix::Identity(r, r) - v_.transpose() * minv_u_);
  invertible_ = lu_rcond_guarded(cap_lu_) > 1e-14;
}

Matrix ShiftedOperator::apply(const Matrix& x) const {
  Matrix y = scale_ * base_->apply(x);
  if (shift_ != 0.0) y += shift_ * x;
  if (u_.cols() > 0) y.noalias() -= u_ * (v_.transpose() * x);
  return y;
}

Matrix ShiftedOperator::apply_transpose(const Matrix& x) const {
  Matrix y = scale_ * base_->apply_transpose(x);
  if (shift_ != 0.0) y += shift_ * x;
  if (u_.cols() > 0) y.noalias() -= v_ * (u_.transpose() * x);
  return y;
}

Matrix ShiftedOperator::apply_inverse(const Matrix& x) const {
  if (!invertible_) {
    throw SingularError(
        "ShiftedOperator: no inverse (shifted base singular or capacitance "
        "vanished)");
  }
  Matrix t = shifted_->apply_inverse(x);
  if (u_.cols() > 0) {
    t.noalias() += minv_u_ * cap_lu_.solve(v_.transpose() * t);
  }
  return t;
}

Matrix ShiftedOperator::apply_inverse_transpose(const Matrix& x) const {
  if (!invertible_) {
    throw SingularError(
        "ShiftedOperator: no inverse (shifted base singular or capacitance "
        "vanished)");
  }
  Matrix t = shifted_->apply_inverse_transpose(x);
  if (u_.cols() > 0) {
    // The transposed-LU solve must be assigned directly; Eigen cannot
    // evaluate it nested inside a product expression.
    const Matrix w = cap_lu_.transpose().solve(Matrix(u_.transpose() * t));
    t.noalias() += mtinv_v_ * w;
  }
  return t;
}

Matrix ShiftedOperator::dense() const {
  Matrix m = scale_ * base_->dense();
  m.diagonal().array() += shift_;
  if (u_.cols() > 0) m.noalias() -= u_ * v_.transpose();
  return m;
}

OperatorPtr ShiftedOperator::scaled_shifted(double scale, double shift) const {
  return std::make_shared<ShiftedOperator>(
      base_, scale * scale_, scale * shift_ + shift, Matrix(scale * u_), v_);
}

FactoredHistory::FactoredHistory(int capacity) : capacity_(capacity) {
  if (capacity < 1) {
    throw std::invalid_argument("FactoredHistory: capacity must be positive");
  }
}

void FactoredHistory::push(LowRankFactorPair x, double time) {
  if (x.Z1.cols() != x.Z2.cols()) {
    throw std::invalid_argument("FactoredHistory: factor rank mismatch");
  }
  if (!entries_.empty() &&
      (x.Z1.rows() != entries_.front().first.Z1.rows() ||
       x.Z2.rows() != entries_.front().first.Z2.rows())) {
    throw std::invalid_argument(
        "FactoredHistory: outer dimensions changed between pushes");
  }
  entries_.emplace_front(std::move(x), time);
  if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_back();
}

const LowRankFactorPair& FactoredHistory::factors(int i) const {
  if (i < 0 || i >= size()) {
    throw std::out_of_range("FactoredHistory: no entry " + std::to_string(i));
  }
  return entries_[static_cast<std::size_t>(i)].first;
}

double FactoredHistory::time(int i) const {
  if (i < 0 || i >= size()) {
    throw std::out_of_range("FactoredHistory: no entry " + std::to_string(i));
  }
  return entries_[static_cast<std::size_t>(i)].second;
}

LowRankFactorPair build_bdf_rhs_factors(const FactoredHistory& history,
                                        const Matrix& f, const Matrix& g,
                                        double h, double beta,
                                        const std::vector<double>& alpha,
                                        Index r_max, double trunc_tol) {
  if (history.size() == 0) {
    throw std::invalid_argument("build_bdf_rhs_factors: history is empty");
  }
  if (static_cast<int>(alpha.size()) > history.size()) {
    throw std::invalid_argument(
        "build_bdf_rhs_factors: more coefficients than history entries");
  }
  if (h <= 0.0 || beta <= 0.0) {
    throw std::invalid_argument(
        "build_bdf_rhs_factors: step size and beta must be positive");
  }
  if (f.cols() != g.cols()) {
    throw std::invalid_argument(
        "build_bdf_rhs_factors: source factors disagree in rank");
  }
  const Index n = f.rows();
  const Index p = g.rows();

  Index total = f.cols();
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    const LowRankFactorPair& zi = history.factors(static_cast<int>(i));
    if (zi.Z1.rows() != n || zi.Z2.rows() != p) {
      throw std::invalid_argument(
          "build_bdf_rhs_factors: history does not match the source factors");
    }
    total += zi.rank();
  }

  Matrix ft(n, total);
  Matrix gt(p, total);
  const double root = std::sqrt(h * beta);
  ft.leftCols(f.cols()) = root * f;
  gt.leftCols(g.cols()) = root * g;
  Index at = f.cols();
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    const LowRankFactorPair& zi = history.factors(static_cast<int>(i));
    const double w = std::sqrt(std::abs(alpha[i]));
    // Negative coefficients ride on the right factor as a plain sign; the
    // square root only ever sees |alpha|.
    const double signed_w = alpha[i] < 0.0 ? -w : w;
    ft.middleCols(at, zi.rank()) = w * zi.Z1;
    gt.middleCols(at, zi.rank()) = signed_w * zi.Z2;
    at += zi.rank();
  }

  LowRankFactorPair out{std::move(ft), std::move(gt)};
  if (r_max >= 0 && out.rank() > r_max) {
    out = compress_factors(out, trunc_tol, r_max);
  }
  return out;
}

namespace {

void grow_side(KrylovState& state, const LinearOperator& op) {
  state = state.extended ? eba_step(state, op) : block_arnoldi_step(state, op);
}

KrylovState init_side(const LinearOperator& op, const Matrix& start,
                      bool extended) {
  if (extended) {
    try {
      return eba_init(op, start);
    } catch (const SingularError&) {
      // fall through to the forward-only process
    }
  }
  return block_arnoldi_init(op, start);
}

}  // namespace

LowRankFactorPair sylvester_low_rank_krylov(const OperatorPtr& a_op,
                                            const OperatorPtr& d_op,
                                            const Matrix& f, const Matrix& g,
                                            double tol, int itermax,
                                            bool use_extended,
                                            double trunc_tol) {
  if (!a_op || !d_op) {
    throw std::invalid_argument("sylvester_low_rank_krylov: operators not set");
  }
  const Index n = a_op->dim();
  const Index p = d_op->dim();
  if (f.rows() != n || g.rows() != p || f.cols() != g.cols()) {
    throw std::invalid_argument(
        "sylvester_low_rank_krylov: right-hand side does not fit the "
        "operators");
  }
  if (tol <= 0.0 || itermax < 1 || trunc_tol <= 0.0) {
    throw std::invalid_argument(
        "sylvester_low_rank_krylov: tolerances and budget must be positive");
  }
  const double rhs_norm = factored_frobenius_norm({f, g});
  if (rhs_norm == 0.0) return zero_factors(n, p);

  const OperatorPtr d_t = transpose(d_op);
  KrylovState sa = init_side(*a_op, f, use_extended);
  KrylovState sd = init_side(*d_t, g, use_extended);

  double last_ratio = std::numeric_limits<double>::quiet_NaN();
  for (int m = 1; m <= itermax; ++m) {
    if (!sa.breakdown) grow_side(sa, *a_op);
    if (!sd.breakdown) grow_side(sd, *d_t);
    const bool exhausted = sa.breakdown && sd.breakdown;

    const Index ka = sa.t_bar.cols();
    const Index kd = sd.t_bar.cols();
    const Matrix va = sa.basis_dense().leftCols(ka);
    const Matrix wd = sd.basis_dense().leftCols(kd);
    const Matrix t_a = sa.t_bar.topLeftCorner(ka, ka);
    // The corange side was built on D^T, so transpose its projection back.
    const Matrix t_d = sd.t_bar.topLeftCorner(kd, kd).transpose();
    const Matrix fm = va.transpose() * f;
    const Matrix gm = wd.transpose() * g;

    Matrix y;
    try {
      y = solve_sylvester(t_a, t_d, -(fm * gm.transpose()));
    } catch (const SingularError&) {
      // A small projected pencil can share eigenvalues even though the full
      // one does not; growing the space usually separates them again.
      if (exhausted) throw;
      continue;
    }
    const ResidualNorms rn = residual_norm(y, sa.t_next, sd.t_next);
    last_ratio = rn.frobenius / rhs_norm;
    if (last_ratio < tol || exhausted) {
      const LowRankFactorPair small = truncated_svd_factor(y, trunc_tol);
      return {va * small.Z1, wd * small.Z2};
    }
  }

  std::ostringstream msg;
  msg << "sylvester_low_rank_krylov: residual ratio " << last_ratio
      << " after " << itermax << " iterations (tol " << tol << ")";
  throw ConvergenceError(msg.str());
}

LowRankFactorPair newton_step_nare(const LowRankFactorPair& current,
                                   const OperatorPtr& a_shifted,
                                   const OperatorPtr& d_shifted,
                                   const CouplingMatrix& s_scaled,
                                   const Matrix& f_tilde,
                                   const Matrix& g_tilde,
                                   const BdfNewtonOptions& opts) {
  if (!a_shifted || !d_shifted) {
    throw std::invalid_argument("newton_step_nare: operators not set");
  }
  const Index n = a_shifted->dim();
  const Index p = d_shifted->dim();
  if (current.Z1.rows() != n || current.Z2.rows() != p ||
      current.Z1.cols() != current.Z2.cols()) {
    throw std::invalid_argument(
        "newton_step_nare: iterate does not fit the operators");
  }
  if (s_scaled.rows() != p || s_scaled.cols() != n) {
    throw std::invalid_argument(
        "newton_step_nare: coupling matrix has the wrong shape");
  }
  if (f_tilde.rows() != n || g_tilde.rows() != p ||
      f_tilde.cols() != g_tilde.cols()) {
    throw std::invalid_argument(
        "newton_step_nare: constant-term factors do not fit");
  }

  const Index r = current.rank();
  const Matrix s_z1 = s_scaled.apply(current.Z1);             // p x r
  const Matrix st_z2 = s_scaled.apply_transpose(current.Z2);  // n x r
  const auto a_corr = std::make_shared<ShiftedOperator>(a_shifted, 1.0, 0.0,
                                                        current.Z1, st_z2);
  const auto d_corr = std::make_shared<ShiftedOperator>(d_shifted, 1.0, 0.0,
                                                        s_z1, current.Z2);

  // Constant term of the linearized equation, kept factored:
  //   (A - X S) X_next + X_next (D - S X) + (X S X - Ftilde Gtilde^T) = 0.
  const Matrix m_small = current.Z2.transpose() * s_z1;  // r x r = Z2^T S Z1
  Matrix cf(n, r + f_tilde.cols());
  cf.leftCols(r).noalias() = current.Z1 * m_small;
  cf.rightCols(f_tilde.cols()) = f_tilde;
  Matrix cg(p, r + g_tilde.cols());
  cg.leftCols(r) = current.Z2;
  cg.rightCols(g_tilde.cols()) = -g_tilde;
  const LowRankFactorPair rhs =
      compress_factors({std::move(cf), std::move(cg)}, opts.trunc_tol);
  if (rhs.rank() == 0) return zero_factors(n, p);

  const LowRankFactorPair x = sylvester_low_rank_krylov(
      a_corr, d_corr, rhs.Z1, rhs.Z2, opts.inner_tol, opts.inner_itermax,
      opts.use_extended, opts.trunc_tol);
  return compress_factors(x, opts.trunc_tol, opts.r_max);
}

namespace {

// ||A X + X D - X S X - Ftilde Gtilde^T||_F of a factored iterate, through
// rank-sized Gram products only.
double nare_residual_norm(const LowRankFactorPair& x, const OperatorPtr& a_op,
                          const OperatorPtr& d_op,
                          const CouplingMatrix& s_scaled,
                          const LowRankFactorPair& rhs) {
  const Index n = x.Z1.rows();
  const Index p = x.Z2.rows();
  const Index r = x.rank();
  const Matrix m_small = x.Z2.transpose() * s_scaled.apply(x.Z1);
  Matrix left(n, 3 * r + rhs.rank());
  left.leftCols(r) = a_op->apply(x.Z1);
  left.middleCols(r, r) = x.Z1;
  left.middleCols(2 * r, r).noalias() = -x.Z1 * m_small;
  left.rightCols(rhs.rank()) = -rhs.Z1;
  Matrix right(p, 3 * r + rhs.rank());
  right.leftCols(r) = x.Z2;
  right.middleCols(r, r) = d_op->apply_transpose(x.Z2);
  right.middleCols(2 * r, r) = x.Z2;
  right.rightCols(rhs.rank()) = rhs.Z2;
  return factored_frobenius_norm({std::move(left), std::move(right)});
}

}  // namespace

BdfNewtonSolution solve_ndre_bdf_newton(const NDREProblem& problem,
                                        int s_order, double h, double t_f,
                                        const BdfNewtonOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  if (!problem.A || !problem.D) {
    throw std::invalid_argument("solve_ndre_bdf_newton: operators not set");
  }
  const Index n = problem.n();
  const Index p = problem.p();
  if (problem.F.rows() != n || problem.G.rows() != p ||
      problem.F.cols() != problem.G.cols()) {
    throw std::invalid_argument(
        "solve_ndre_bdf_newton: source factors do not match the operators");
  }
  if (problem.S.rows() != p || problem.S.cols() != n) {
    throw std::invalid_argument(
        "solve_ndre_bdf_newton: coupling matrix has the wrong shape");
  }
  if (problem.X0.Z1.rows() != n || problem.X0.Z2.rows() != p ||
      problem.X0.Z1.cols() != problem.X0.Z2.cols()) {
    throw std::invalid_argument(
        "solve_ndre_bdf_newton: initial factors do not fit");
  }
  if (s_order < 1 || s_order > 3) {
    throw std::invalid_argument("BDF order must be 1, 2 or 3");
  }
  if (h <= 0.0 || t_f <= 0.0) {
    throw std::invalid_argument(
        "solve_ndre_bdf_newton: step size and final time must be positive");
  }
  if (opts.newton_tol <= 0.0 || opts.newton_itermax < 1 ||
      opts.inner_tol <= 0.0 || opts.inner_itermax < 1 ||
      opts.trunc_tol <= 0.0) {
    throw std::invalid_argument(
        "solve_ndre_bdf_newton: tolerances and budgets must be positive");
  }

  const long steps = std::max<long>(1, std::llround(t_f / h));
  const double hs = t_f / static_cast<double>(steps);

  BdfNewtonSolution sol;
  sol.report.inner = "bdf" + std::to_string(s_order) + "-newton";
  sol.report.tol_rel = opts.newton_tol;
  sol.report.rhs_norm = factored_frobenius_norm({problem.F, problem.G});

  FactoredHistory history(s_order);
  {
    LowRankFactorPair x0 =
        compress_factors(problem.X0, opts.trunc_tol, opts.r_max);
    history.push(x0, 0.0);
    sol.times.push_back(0.0);
    sol.factors.push_back(std::move(x0));
  }

  int last_order = 0;
  BdfTable table{0.0, {}};
  OperatorPtr a_op, d_op;
  CouplingMatrix s_scaled;
  for (long k = 1; k <= steps; ++k) {
    const double tk = (k == steps) ? t_f : hs * static_cast<double>(k);
    const int order = std::min(s_order, history.size());
    if (order != last_order) {
      table = bdf_table(order);
      a_op = problem.A->scaled_shifted(hs * table.beta, 0.5);
      d_op = problem.D->scaled_shifted(hs * table.beta, 0.5);
      s_scaled = problem.S.scaled(hs * table.beta);
      last_order = order;
    }
    const LowRankFactorPair rhs =
        build_bdf_rhs_factors(history, problem.F, problem.G, hs, table.beta,
                              table.alpha, opts.r_max, opts.trunc_tol);

    LowRankFactorPair x = history.factors(0);
    double update = std::numeric_limits<double>::infinity();
    bool settled = false;
    int used = 0;
    for (int l = 1; l <= opts.newton_itermax; ++l) {
      LowRankFactorPair next =
          newton_step_nare(x, a_op, d_op, s_scaled, rhs.Z1, rhs.Z2, opts);
      const double den = factored_frobenius_norm(x);
      const double num = factored_frobenius_distance(next, x);
      update = den > 0.0 ? num / den : num;
      x = std::move(next);
      used = l;
      if (update < opts.newton_tol) {
        settled = true;
        break;
      }
    }
    if (!settled) {
      std::ostringstream msg;
      msg << "BDF-Newton stalled at step " << k << " (t = " << tk
          << "): relative update " << update << " after "
          << opts.newton_itermax << " iterations";
      throw ConvergenceError(msg.str());
    }

    x = compress_factors(x, opts.trunc_tol, opts.r_max);
    history.push(x, tk);
    sol.times.push_back(tk);
    sol.factors.push_back(x);

    SolveReport::Check check;
    check.m = static_cast<int>(k);
    check.residual_two = update;
    check.residual_fro = nare_residual_norm(x, a_op, d_op, s_scaled, rhs);
    const double den = factored_frobenius_norm(rhs);
    check.ratio =
        den > 0.0 ? check.residual_fro / den : check.residual_fro;
    check.pert_a = static_cast<double>(used);
    check.pert_d = static_cast<double>(x.rank());
    sol.report.checks.push_back(check);
  }

  sol.report.converged = true;
  sol.report.m_final = static_cast<int>(steps);
  sol.report.basis_cols_a = sol.factors.back().Z1.cols();
  sol.report.basis_cols_d = sol.factors.back().Z2.cols();
  if (!sol.report.checks.empty()) {
    sol.report.final_residual = sol.report.checks.back().residual_fro;
    sol.report.final_ratio = sol.report.checks.back().ratio;
  }
  sol.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return sol;
}

}  // namespace ndre
