#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ndre/krylov.hpp"
#include "ndre/problem.hpp"
#include "ndre/types.hpp"

namespace ndre {

// Time integrator applied to the projected small problem.
enum class InnerIntegrator { exp, bdf1, bdf2, bdf3, rosenbrock2 };

const char* inner_integrator_name(InnerIntegrator inner);
InnerIntegrator inner_integrator_from_name(const std::string& name);

struct SolverOptions {
  int m_max = 100;           // Krylov step budget per side
  int check_every = 5;       // residual check period, in Krylov steps
  double tol_rel = 1e-10;    // stop when residual / ||F G^T||_F drops below
  InnerIntegrator inner = InnerIntegrator::exp;
  double h = 1e-2;           // inner time step (ignored by the exp scheme)
  double t_f = 1.0;
  std::vector<double> t_grid;  // output times, ascending, within [0, t_f];
                               // empty means {t_f}
  double trunc_tol = 1e-12;  // SVD cut for the returned factors
  // Gate convergence on the larger of the two coupling-block spectral norms
  // instead of their Frobenius composite.
  bool stop_on_two_norm = false;
  // Keep the dense bases in the solution (test and oracle scale only).
  bool keep_bases = false;
};

// The residual of the projected solution never has to be assembled: with
// exact arithmetic it equals
//   V_hat (T_hat_A E_m^T Y) W^T  +  V (Y E_m T_hat_D^T) W_hat^T,
// two terms with orthonormal outer factors and orthogonal ranges/corances.
// Both the spectral reading (the max of the two block norms) and the
// Frobenius composite sqrt(||.||_F^2 + ||.||_F^2) are returned; the driver
// stops on the Frobenius ratio unless configured otherwise.
struct ResidualNorms {
  double two_norm = 0.0;
  double frobenius = 0.0;
};

// T_next blocks are the coupling rows produced by the Krylov processes:
// t_next of the range-side state and of the corange-side (transposed
// operator) state. Their column counts select the trailing rows/columns of
// Y; after a breakdown a block has zero rows and contributes nothing.
ResidualNorms residual_norm(const Matrix& y, const Matrix& t_next_a,
                            const Matrix& t_next_d);

// Spectral norms of the two coupling blocks. These equal the norms of the
// perturbations that make the pair of bases exactly invariant, so they
// measure how far the projected problem sits from the full one.
std::pair<double, double> perturbation_norms(const KrylovState& state_a,
                                             const KrylovState& state_d);

struct SolveReport {
  struct Check {
    int m = 0;
    double residual_two = 0.0;
    double residual_fro = 0.0;
    double ratio = 0.0;  // gated residual over ||F G^T||_F
    double pert_a = 0.0;
    double pert_d = 0.0;
  };

  bool converged = false;
  int m_final = 0;
  Index basis_cols_a = 0;
  Index basis_cols_d = 0;
  // A side that cannot be inverted is grown with the plain block Krylov
  // process instead of the extended one.
  bool fallback_a = false;
  bool fallback_d = false;
  bool breakdown_a = false;
  bool breakdown_d = false;
  std::string inner;
  double tol_rel = 0.0;
  double rhs_norm = 0.0;  // ||F G^T||_F, the stopping denominator
  double final_residual = 0.0;
  double final_ratio = 0.0;
  double wall_seconds = 0.0;
  std::vector<Check> checks;
};

std::string report_to_json(const SolveReport& report);

struct LowRankSolution {
  std::vector<double> times;
  std::vector<LowRankFactorPair> factors;  // X(t) ~= Z1 Z2^T per output time
  double residual = 0.0;                   // Frobenius estimate at t_f
  SolveReport report;

  // Enough to replay the residual estimate without the full bases: the
  // projected solution at t_f and the final coupling blocks.
  Matrix y_final;
  Matrix t_next_a;
  Matrix t_next_d;
  std::vector<Matrix> cores;  // projected solution at each output time
  Matrix basis_a;  // populated when SolverOptions.keep_bases is set
  Matrix basis_d;
};

// Grows block Krylov bases for (A, F) and (D^T, G), extended when the
// operator side can be inverted, and every check_every steps solves the
// projected problem over [0, t_f] and evaluates the residual there. Stops at
// the relative tolerance, at an invariant subspace on both sides (the
// projection is then exact), or at m_max with the result flagged
// non-converged. Truncated factors are produced at the output times only
// once the basis growth has ended.
LowRankSolution solve_ndre(const NDREProblem& problem,
                           const SolverOptions& opts);

// X(t_index) = basis_a * core * basis_d^T materialized. Guarded against
// products too large to be anything but a mistake outside tests.
Matrix assemble_dense(const LowRankSolution& solution, const Matrix& basis_a,
                      const Matrix& basis_d, std::size_t t_index);

}  // namespace ndre
