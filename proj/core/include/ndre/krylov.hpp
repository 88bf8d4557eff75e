#pragma once

#include <utility>
#include <vector>

#include "ndre/operators.hpp"
#include "ndre/problem.hpp"
#include "ndre/projected_integrators.hpp"
#include "ndre/types.hpp"

namespace ndre {

// Orthonormal basis of a block Krylov subspace (plain, forward products
// only) or an extended one (forward and inverse products), together with the
// projection of the operator onto it.
//
// After m steps `blocks` holds m+1 basis blocks (m if the process ran into
// an invariant subspace) and t_bar carries the exact Gram products
// V^T (A V_j) for the first m column blocks.  Consequences kept as
// invariants by the step functions:
//   - the concatenated blocks have orthonormal columns,
//   - A * [blocks 1..m] = [blocks 1..m+1] * t_bar up to deflation tolerance,
//   - t_bar.topLeftCorner(k, k), k = t_bar.cols(), is the projected operator,
//   - t_next is the bottom block row of t_bar (coupling to the newest block,
//     zero rows after a breakdown).
// For extended states l_bar holds the analogous inverse projection
// V^T (A^{-1} V_j).
struct KrylovState {
  std::vector<Matrix> blocks;
  // Leading columns of each block that came from forward products; the rest
  // came from inverse products.  Plain states use the full width.
  std::vector<Index> forward_widths;
  Matrix t_bar;
  Matrix t_next;
  Matrix l_bar;
  // Projection of the starting data onto the first block: V_1^T [V, A^{-1}V]
  // for extended states, V_1^T V for plain ones.
  Matrix lambda;
  int m = 0;  // completed steps = number of column blocks in t_bar
  std::vector<std::pair<int, Index>> deflation_log;
  bool extended = false;
  bool breakdown = false;

  Index basis_cols() const;
  Matrix basis_dense() const;
};

using EBAState = KrylovState;
using BlockArnoldiState = KrylovState;

// First block from orthogonalizing [V, A^{-1} V]; rank-deficient input is
// deflated and logged as step 0.  Throws SingularError when the operator
// does not support inverse application (callers fall back to the plain
// process) and invalid_argument when V is numerically zero.
EBAState eba_init(const LinearOperator& op, const Matrix& v);

// Expands the newest block through [A * forward part, A^{-1} * inverse
// part], orthogonalizes against all previous blocks (two modified
// Gram-Schmidt passes) and appends the surviving directions.  A fully
// deflated candidate marks the state as broken down: the subspace is
// invariant and the projection is exact.  Stepping a broken-down state is a
// logic error.
EBAState eba_step(const KrylovState& state, const LinearOperator& op);

// Plain block Krylov process; forward products only.
BlockArnoldiState block_arnoldi_init(const LinearOperator& op,
                                     const Matrix& v);
BlockArnoldiState block_arnoldi_step(const KrylovState& state,
                                     const LinearOperator& op);

// Projects the problem onto the basis pair.  state_a spans the range side
// (built on A with start block F); state_d spans the corange side, built on
// the TRANSPOSE of D with start block G, so its projected block is
// transposed here to give T_D = W^T D W.  Reads the projected operators off
// t_bar rather than recomputing them.
ProjectedNDRE projected_matrices(const KrylovState& state_a,
                                 const KrylovState& state_d,
                                 const NDREProblem& problem);

}  // namespace ndre
