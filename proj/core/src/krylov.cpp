#include "ndre/krylov.hpp"

#include <Eigen/QR>
#include <stdexcept>

namespace ndre {

namespace {

constexpr double kDeflationTol = 1e-12;

// Orthonormal basis of the numerical column space.  Columns whose pivoted
// triangular entry falls below tol_abs are deflated; tol_abs is relative to
// the scale of the incoming data, fixed by the caller before any
// orthogonalization shrank the columns.
Matrix cpqr_orth(const Matrix& w, double tol_abs) {
  if (w.cols() == 0) return Matrix(w.rows(), 0);
  Eigen::ColPivHouseholderQR<Matrix> qr(w);
  const Vector diag = qr.matrixR().diagonal().cwiseAbs();
  Index rank = 0;
  while (rank < diag.size() && diag(rank) > tol_abs) ++rank;
  Matrix q = Matrix::Identity(w.rows(), rank);
  q.applyOnTheLeft(qr.householderQ());
  return q;
}

double column_scale(const Matrix& w) {
  if (w.cols() == 0) return 0.0;
  return w.colwise().norm().maxCoeff();
}

// Two passes of block modified Gram-Schmidt; the second pass repairs the
// cancellation the first one leaves behind.
void orthogonalize_against(const std::vector<Matrix>& blocks, Matrix& w) {
  if (w.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    for (const Matrix& b : blocks) {
      w.noalias() -= b * (b.transpose() * w);
    }
  }
}

Matrix concat_cols(const Matrix& left, const Matrix& right) {
  Matrix out(left.rows(), left.cols() + right.cols());
  out.leftCols(left.cols()) = left;
  out.rightCols(right.cols()) = right;
  return out;
}

// The pivoted QR may keep a direction whose pivot sits barely above the
// deflation threshold. Such a column mixes round-off from the larger ones
// and is orthogonal to the older blocks only to eps over its relative pivot,
// which poisons every projection identity downstream. One more projection
// pass and a clean (unpivoted) QR restore eps-level orthogonality; the rank
// decision already happened, so nothing can deflate here.
Matrix reorthonormalize(const std::vector<Matrix>& blocks, const Matrix* extra,
                        Matrix q) {
  if (q.cols() == 0) return q;
  for (const Matrix& b : blocks) q.noalias() -= b * (b.transpose() * q);
  if (extra && extra->cols() > 0) {
    q.noalias() -= (*extra) * (extra->transpose() * q);
  }
  Eigen::HouseholderQR<Matrix> qr(q);
  Matrix out = Matrix::Identity(q.rows(), q.cols());
  out.applyOnTheLeft(qr.householderQ());
  return out;
}

KrylovState advance(const KrylovState& state, const LinearOperator& op) {
  if (state.breakdown) {
    throw std::logic_error(
        "Krylov step requested after an invariant-subspace breakdown");
  }
  if (state.blocks.empty()) {
    throw std::logic_error("Krylov step on an uninitialized state");
  }

  KrylovState next = state;
  const Matrix vj = next.blocks.back();
  const Index n = vj.rows();
  const Index wj = vj.cols();
  const Index fw = next.forward_widths.back();

  // Candidate block and the operator images of the full current block; the
  // forward image of the forward channel serves both.
  const Matrix avf = op.apply(vj.leftCols(fw));
  Matrix avj(n, wj);
  avj.leftCols(fw) = avf;

  Matrix candidate;
  Matrix aivj;
  double scale_f = column_scale(avf);
  double scale_i = 0.0;
  if (next.extended) {
    const Matrix vi = vj.rightCols(wj - fw);
    const Matrix aivi = op.apply_inverse(vi);
    scale_i = column_scale(aivi);
    candidate = concat_cols(avf, aivi);
    avj.rightCols(wj - fw) = op.apply(vi);
    aivj = concat_cols(op.apply_inverse(vj.leftCols(fw)), aivi);
  } else {
    candidate = avf;
  }

  orthogonalize_against(next.blocks, candidate);

  // Rank detection runs per channel so a dead forward channel cannot mask a
  // live inverse one (or vice versa).
  Matrix qf = cpqr_orth(candidate.leftCols(fw), kDeflationTol * scale_f);
  qf = reorthonormalize(next.blocks, nullptr, std::move(qf));
  Matrix tail = candidate.rightCols(wj - fw);
  if (qf.cols() > 0 && tail.cols() > 0) {
    tail -= qf * (qf.transpose() * tail);
    tail -= qf * (qf.transpose() * tail);
  }
  Matrix qi = cpqr_orth(tail, kDeflationTol * scale_i);
  qi = reorthonormalize(next.blocks, &qf, std::move(qi));
  const Matrix vnew = concat_cols(qf, qi);

  next.m += 1;
  const Index dropped = wj - vnew.cols();
  if (dropped > 0) next.deflation_log.emplace_back(next.m, dropped);

  if (vnew.cols() > 0) {
    next.blocks.push_back(vnew);
    next.forward_widths.push_back(qf.cols());
  } else {
    next.breakdown = true;
  }

  // Exact Gram columns keep the projection identities robust under
  // deflation: no recurrence bookkeeping, just V^T (A V_j).
  const Index old_rows = next.t_bar.rows();
  const Index old_cols = next.t_bar.cols();
  next.t_bar.conservativeResize(old_rows + vnew.cols(), old_cols + wj);
  next.t_bar.bottomLeftCorner(vnew.cols(), old_cols).setZero();
  const Matrix basis = next.basis_dense();
  next.t_bar.rightCols(wj).noalias() = basis.transpose() * avj;
  next.t_next = next.t_bar.bottomRightCorner(vnew.cols(), wj);

  if (next.extended) {
    next.l_bar.conservativeResize(old_rows + vnew.cols(), old_cols + wj);
    next.l_bar.bottomLeftCorner(vnew.cols(), old_cols).setZero();
    next.l_bar.rightCols(wj).noalias() = basis.transpose() * aivj;
  }
  return next;
}

KrylovState init_state(const LinearOperator& op, const Matrix& v,
                       bool extended) {
  if (v.rows() != op.dim() || v.cols() == 0) {
    throw std::invalid_argument("start block does not match the operator");
  }
  if (extended && !op.invertible()) {
    throw SingularError(
        "extended Krylov process requires an invertible operator");
  }

  Matrix aiv;
  const double scale_v = column_scale(v);
  double scale_i = 0.0;
  if (extended) {
    aiv = op.apply_inverse(v);
    scale_i = column_scale(aiv);
  }

  Matrix qf = cpqr_orth(v, kDeflationTol * scale_v);
  Matrix qi(v.rows(), 0);
  if (extended) {
    Matrix tail = aiv;
    if (qf.cols() > 0) {
      tail -= qf * (qf.transpose() * tail);
      tail -= qf * (qf.transpose() * tail);
    }
    qi = cpqr_orth(tail, kDeflationTol * scale_i);
    qi = reorthonormalize({}, &qf, std::move(qi));
  }
  const Matrix v1 = concat_cols(qf, qi);
  if (v1.cols() == 0) {
    throw std::invalid_argument("start block is numerically zero");
  }

  KrylovState state;
  state.extended = extended;
  state.blocks.push_back(v1);
  state.forward_widths.push_back(qf.cols());
  state.t_bar = Matrix(v1.cols(), 0);
  if (extended) state.l_bar = Matrix(v1.cols(), 0);
  state.lambda = extended ? Matrix(v1.transpose() * concat_cols(v, aiv))
                          : Matrix(v1.transpose() * v);
  const Index dropped =
      (extended ? v.cols() + aiv.cols() : v.cols()) - v1.cols();
  if (dropped > 0) state.deflation_log.emplace_back(0, dropped);
  return state;
}

}  // namespace

Index KrylovState::basis_cols() const {
  Index total = 0;
  for (const Matrix& b : blocks) total += b.cols();
  return total;
}

Matrix KrylovState::basis_dense() const {
  Matrix out(blocks.empty() ? 0 : blocks.front().rows(), basis_cols());
  Index offset = 0;
  for (const Matrix& b : blocks) {
    out.middleCols(offset, b.cols()) = b;
    offset += b.cols();
  }
  return out;
}

EBAState eba_init(const LinearOperator& op, const Matrix& v) {
  return init_state(op, v, true);
}

EBAState eba_step(const KrylovState& state, const LinearOperator& op) {
  if (!state.extended) {
    throw std::logic_error("eba_step on a plain block Krylov state");
  }
  return advance(state, op);
}

BlockArnoldiState block_arnoldi_init(const LinearOperator& op,
                                     const Matrix& v) {
  return init_state(op, v, false);
}

BlockArnoldiState block_arnoldi_step(const KrylovState& state,
                                     const LinearOperator& op) {
  if (state.extended) {
    throw std::logic_error("block_arnoldi_step on an extended state");
  }
  return advance(state, op);
}

ProjectedNDRE projected_matrices(const KrylovState& state_a,
                                 const KrylovState& state_d,
                                 const NDREProblem& problem) {
  const Index ka = state_a.t_bar.cols();
  const Index kd = state_d.t_bar.cols();
  if (ka == 0 || kd == 0) {
    throw std::logic_error("projection requested before any Krylov step");
  }
  const Matrix va = state_a.basis_dense().leftCols(ka);
  const Matrix wd = state_d.basis_dense().leftCols(kd);
  if (va.rows() != problem.n() || wd.rows() != problem.p()) {
    throw std::invalid_argument("basis and problem dimensions disagree");
  }

  ProjectedNDRE proj;
  proj.T_A = state_a.t_bar.topLeftCorner(ka, ka);
  // The corange basis was built on D^T, so its projected block is the
  // transpose of W^T D W.
  proj.T_D = state_d.t_bar.topLeftCorner(kd, kd).transpose();
  proj.S_m = wd.transpose() * problem.S.apply(va);
  proj.F_m = va.transpose() * problem.F;
  proj.G_m = wd.transpose() * problem.G;
  proj.Y0 = (va.transpose() * problem.X0.Z1) *
            (wd.transpose() * problem.X0.Z2).transpose();
  return proj;
}

}  // namespace ndre
