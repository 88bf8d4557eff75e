#include "ndre/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "ndre/dense_kernels.hpp"
#include "ndre/projected_integrators.hpp"

namespace ndre {

namespace {

constexpr Index kAssembleCap = 10'000'000;

int bdf_order_of(InnerIntegrator inner) {
  switch (inner) {
    case InnerIntegrator::bdf1:
      return 1;
    case InnerIntegrator::bdf2:
      return 2;
    case InnerIntegrator::bdf3:
      return 3;
    default:
      return 0;
  }
}

// Projected trajectory covering the wanted times. The exp scheme visits
// exactly {0} + wanted; the step schemes march their uniform grid to t_f and
// are sampled afterwards.
Trajectory run_inner(const ProjectedNDRE& proj, const SolverOptions& opts,
                     const std::vector<double>& wanted) {
  if (opts.inner == InnerIntegrator::exp) {
    std::vector<double> grid;
    if (wanted.empty() || wanted.front() > 0.0) grid.push_back(0.0);
    grid.insert(grid.end(), wanted.begin(), wanted.end());
    return solve_projected_exp(proj, grid);
  }
  if (opts.inner == InnerIntegrator::rosenbrock2) {
    return solve_projected_rosenbrock2(proj, opts.h,
                                       rosenbrock2_default_gamma, opts.t_f);
  }
  return solve_projected_bdf(proj, bdf_order_of(opts.inner), opts.h,
                             opts.t_f);
}

// Snapshot nearest to t; the step schemes do not interpolate between steps.
const Matrix& sample_at(const Trajectory& traj, double t) {
  const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t);
  std::size_t i = static_cast<std::size_t>(it - traj.times.begin());
  if (i == traj.times.size()) return traj.values.back();
  if (i > 0 && t - traj.times[i - 1] < traj.times[i] - t) --i;
  return traj.values[i];
}

void validate(const NDREProblem& problem, const SolverOptions& opts) {
  if (!problem.A || !problem.D) {
    throw std::invalid_argument("problem operators are unset");
  }
  const Index n = problem.n();
  const Index p = problem.p();
  if (problem.F.rows() != n || problem.G.rows() != p ||
      problem.F.cols() != problem.G.cols() || problem.F.cols() == 0) {
    throw std::invalid_argument(
        "right-hand side factors do not match the problem dimensions");
  }
  if (problem.F.norm() == 0.0 || problem.G.norm() == 0.0) {
    throw std::invalid_argument("right-hand side factors must be nonzero");
  }
  if (problem.S.rows() != p || problem.S.cols() != n) {
    throw std::invalid_argument("coupling matrix has the wrong shape");
  }
  if (problem.X0.Z1.rows() != n || problem.X0.Z2.rows() != p ||
      problem.X0.Z1.cols() != problem.X0.Z2.cols()) {
    throw std::invalid_argument("initial factors do not match the problem");
  }
  if (opts.m_max < 1) throw std::invalid_argument("m_max must be positive");
  if (opts.check_every < 1) {
    throw std::invalid_argument("check_every must be positive");
  }
  if (!(opts.tol_rel > 0.0)) {
    throw std::invalid_argument("tol_rel must be positive");
  }
  if (!(opts.trunc_tol > 0.0)) {
    throw std::invalid_argument("trunc_tol must be positive");
  }
  if (!(opts.t_f > 0.0)) throw std::invalid_argument("t_f must be positive");
  if (opts.inner != InnerIntegrator::exp && !(opts.h > 0.0)) {
    throw std::invalid_argument("inner step size must be positive");
  }
  double prev = -1.0;
  for (double t : opts.t_grid) {
    if (!(t >= 0.0) || !(t <= opts.t_f) || !(t > prev)) {
      throw std::invalid_argument(
          "output times must increase strictly within [0, t_f]");
    }
    prev = t;
  }
}

}  // namespace

const char* inner_integrator_name(InnerIntegrator inner) {
  switch (inner) {
    case InnerIntegrator::exp:
      return "exp";
    case InnerIntegrator::bdf1:
      return "bdf1";
    case InnerIntegrator::bdf2:
      return "bdf2";
    case InnerIntegrator::bdf3:
      return "bdf3";
    case InnerIntegrator::rosenbrock2:
      return "rosenbrock2";
  }
  return "unknown";
}

InnerIntegrator inner_integrator_from_name(const std::string& name) {
  if (name == "exp") return InnerIntegrator::exp;
  if (name == "bdf1") return InnerIntegrator::bdf1;
  if (name == "bdf2") return InnerIntegrator::bdf2;
  if (name == "bdf3") return InnerIntegrator::bdf3;
  if (name == "rosenbrock2") return InnerIntegrator::rosenbrock2;
  throw std::invalid_argument("unknown inner integrator: " + name);
}

ResidualNorms residual_norm(const Matrix& y, const Matrix& t_next_a,
                            const Matrix& t_next_d) {
  if (t_next_a.cols() > y.rows() || t_next_d.cols() > y.cols()) {
    throw std::invalid_argument(
        "coupling blocks do not fit the projected solution");
  }
  ResidualNorms out;
  double fro_sq = 0.0;
  if (t_next_a.rows() > 0 && t_next_a.cols() > 0) {
    const Matrix term = t_next_a * y.bottomRows(t_next_a.cols());
    out.two_norm = std::max(out.two_norm, spectral_norm(term));
    fro_sq += term.squaredNorm();
  }
  if (t_next_d.rows() > 0 && t_next_d.cols() > 0) {
    const Matrix term = y.rightCols(t_next_d.cols()) * t_next_d.transpose();
    out.two_norm = std::max(out.two_norm, spectral_norm(term));
    fro_sq += term.squaredNorm();
  }
  out.frobenius = std::sqrt(fro_sq);
  return out;
}

std::pair<double, double> perturbation_norms(const KrylovState& state_a,
                                             const KrylovState& state_d) {
  return {spectral_norm(state_a.t_next), spectral_norm(state_d.t_next)};
}

LowRankSolution solve_ndre(const NDREProblem& problem,
                           const SolverOptions& opts) {
  validate(problem, opts);
  const auto start = std::chrono::steady_clock::now();

  LowRankSolution sol;
  SolveReport& report = sol.report;
  report.inner = inner_integrator_name(opts.inner);
  report.tol_rel = opts.tol_rel;
  report.rhs_norm = factored_frobenius_norm({problem.F, problem.G});
  // F G^T can vanish with nonzero factors; stopping then falls back to the
  // absolute residual.
  const double gate_den = report.rhs_norm > 0.0 ? report.rhs_norm : 1.0;

  const OperatorPtr d_t = transpose(problem.D);
  bool extended_a = problem.A->invertible();
  bool extended_d = d_t->invertible();
  KrylovState sa;
  KrylovState sd;
  if (extended_a) {
    try {
      sa = eba_init(*problem.A, problem.F);
    } catch (const SingularError&) {
      extended_a = false;
    }
  }
  if (!extended_a) {
    sa = block_arnoldi_init(*problem.A, problem.F);
    report.fallback_a = true;
  }
  if (extended_d) {
    try {
      sd = eba_init(*d_t, problem.G);
    } catch (const SingularError&) {
      extended_d = false;
    }
  }
  if (!extended_d) {
    sd = block_arnoldi_init(*d_t, problem.G);
    report.fallback_d = true;
  }

  ProjectedNDRE proj;
  Matrix y_tf;
  int m = 0;
  while (true) {
    if (!sa.breakdown) {
      sa = extended_a ? eba_step(sa, *problem.A)
                      : block_arnoldi_step(sa, *problem.A);
    }
    if (!sd.breakdown) {
      sd = extended_d ? eba_step(sd, *d_t) : block_arnoldi_step(sd, *d_t);
    }
    m = std::max(sa.m, sd.m);
    const bool last = (sa.breakdown && sd.breakdown) || m >= opts.m_max;
    if (m % opts.check_every == 0 || last) {
      proj = projected_matrices(sa, sd, problem);
      try {
        y_tf = run_inner(proj, opts, {opts.t_f}).values.back();
      } catch (const std::runtime_error&) {
        // The projected model at a small basis can be unintegrable even
        // though the full problem is fine; growing further usually cures
        // it. Only the final basis gets to fail loudly.
        if (last) throw;
        continue;
      }
      const ResidualNorms rn = residual_norm(y_tf, sa.t_next, sd.t_next);
      const auto [pert_a, pert_d] = perturbation_norms(sa, sd);
      const double gated = opts.stop_on_two_norm ? rn.two_norm : rn.frobenius;
      const double ratio = gated / gate_den;
      report.checks.push_back(
          {m, rn.two_norm, rn.frobenius, ratio, pert_a, pert_d});
      report.final_residual = rn.frobenius;
      report.final_ratio = ratio;
      if (ratio < opts.tol_rel) report.converged = true;
    }
    if (report.converged || last) break;
  }

  report.m_final = m;
  report.basis_cols_a = sa.t_bar.cols();
  report.basis_cols_d = sd.t_bar.cols();
  report.breakdown_a = sa.breakdown;
  report.breakdown_d = sd.breakdown;

  const Matrix va = sa.basis_dense().leftCols(report.basis_cols_a);
  const Matrix wd = sd.basis_dense().leftCols(report.basis_cols_d);

  sol.times = opts.t_grid.empty() ? std::vector<double>{opts.t_f}
                                  : opts.t_grid;
  const Trajectory traj = run_inner(proj, opts, sol.times);
  sol.factors.reserve(sol.times.size());
  sol.cores.reserve(sol.times.size());
  for (double t : sol.times) {
    const Matrix& y = sample_at(traj, t);
    const LowRankFactorPair small = truncated_svd_factor(y, opts.trunc_tol);
    sol.factors.push_back({va * small.Z1, wd * small.Z2});
    sol.cores.push_back(y);
  }

  sol.residual = report.final_residual;
  sol.y_final = y_tf;
  sol.t_next_a = sa.t_next;
  sol.t_next_d = sd.t_next;
  if (opts.keep_bases) {
    sol.basis_a = va;
    sol.basis_d = wd;
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return sol;
}

Matrix assemble_dense(const LowRankSolution& solution, const Matrix& basis_a,
                      const Matrix& basis_d, std::size_t t_index) {
  if (t_index >= solution.cores.size()) {
    throw std::out_of_range("no stored core at the requested time index");
  }
  const Matrix& y = solution.cores[t_index];
  if (basis_a.cols() != y.rows() || basis_d.cols() != y.cols()) {
    throw std::invalid_argument("bases do not match the stored core");
  }
  if (basis_a.rows() * basis_d.rows() > kAssembleCap) {
    throw std::invalid_argument(
        "dense assembly requested at a size beyond the oracle guard");
  }
  return basis_a * y * basis_d.transpose();
}

std::string report_to_json(const SolveReport& report) {
  nlohmann::json j;
  j["converged"] = report.converged;
  j["m_final"] = report.m_final;
  j["basis_cols_a"] = report.basis_cols_a;
  j["basis_cols_d"] = report.basis_cols_d;
  j["fallback_a"] = report.fallback_a;
  j["fallback_d"] = report.fallback_d;
  j["breakdown_a"] = report.breakdown_a;
  j["breakdown_d"] = report.breakdown_d;
  j["inner"] = report.inner;
  j["tol_rel"] = report.tol_rel;
  j["rhs_norm"] = report.rhs_norm;
  j["final_residual"] = report.final_residual;
  j["final_ratio"] = report.final_ratio;
  j["wall_seconds"] = report.wall_seconds;
  j["checks"] = nlohmann::json::array();
  for (const SolveReport::Check& c : report.checks) {
    j["checks"].push_back({{"m", c.m},
                           {"residual_two", c.residual_two},
                           {"residual_fro", c.residual_fro},
                           {"ratio", c.ratio},
                           {"pert_a", c.pert_a},
                           {"pert_d", c.pert_d}});
  }
  return j.dump(2);
}

}  // namespace ndre
