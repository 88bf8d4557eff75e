#include "ndre/projected_integrators.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ndre/dense_kernels.hpp"

namespace ndre {

namespace {

void check_shape(const ProjectedNDRE& p) {
  const Index k = p.T_A.rows();
  const Index l = p.T_D.rows();
  const bool ok = k > 0 && l > 0 && p.T_A.cols() == k && p.T_D.cols() == l &&
                  p.S_m.rows() == l && p.S_m.cols() == k &&
                  p.F_m.rows() == k && p.G_m.rows() == l &&
                  p.F_m.cols() == p.G_m.cols() && p.Y0.rows() == k &&
                  p.Y0.cols() == l;
  if (!ok) throw std::invalid_argument("projected problem shapes disagree");
}

Matrix projected_rhs(const ProjectedNDRE& p, const Matrix& y) {
  Matrix r = p.F_m * p.G_m.transpose();
  r.noalias() -= p.T_A * y;
  r.noalias() -= y * p.T_D;
  r.noalias() += y * (p.S_m * y);
  return r;
}

// Uniform step grid hitting t_f exactly; h is honored up to the rounding
// needed to land on the endpoint.
struct StepGrid {
  Index steps;
  double h;
};

StepGrid step_grid(double h, double t_f) {
  if (!(h > 0.0) || !(t_f > 0.0)) {
    throw std::invalid_argument("step size and final time must be positive");
  }
  const Index steps = std::max<Index>(1, std::llround(t_f / h));
  return {steps, t_f / static_cast<double>(steps)};
}

}  // namespace

BdfTable bdf_table(int s_order) {
  switch (s_order) {
    case 1:
      return {1.0, {1.0}};
    case 2:
      return {2.0 / 3.0, {4.0 / 3.0, -1.0 / 3.0}};
    case 3:
      return {6.0 / 11.0, {18.0 / 11.0, -9.0 / 11.0, 2.0 / 11.0}};
    default:
      throw std::invalid_argument("BDF order must be 1, 2 or 3");
  }
}

Trajectory solve_projected_exp(const ProjectedNDRE& proj,
                               const std::vector<double>& t_grid,
                               int substep_limit) {
  check_shape(proj);
  if (t_grid.empty()) throw std::invalid_argument("empty time grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > t_grid[i - 1])) {
      throw std::invalid_argument("time grid must be strictly increasing");
    }
  }

  const Index k = proj.T_A.rows();
  const Index l = proj.T_D.rows();
  Matrix ham(l + k, l + k);
  ham.topLeftCorner(l, l) = proj.T_D;
  ham.topRightCorner(l, k) = -proj.S_m;
  ham.bottomLeftCorner(k, l) = proj.F_m * proj.G_m.transpose();
  ham.bottomRightCorner(k, k) = -proj.T_A;

  // Substep target: keep ||ham * delta|| in the comfortable range of
  // scaling-and-squaring while bounding the substep count on stiff
  // projections.
  const double ham_norm = ham.cwiseAbs().colwise().sum().maxCoeff();
  double base = t_grid.size() > 1
                    ? t_grid.back() - t_grid.front()
                    : 1.0;
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    base = std::min(base, t_grid[i] - t_grid[i - 1]);
  }
  if (ham_norm > 0.0) base = std::min(base, 20.0 / ham_norm);

  std::map<double, Matrix> propagators;
  const auto propagator = [&](double delta) -> const Matrix& {
    auto it = propagators.find(delta);
    if (it == propagators.end()) {
      it = propagators.emplace(delta, matrix_exponential(delta * ham)).first;
    }
    return it->second;
  };

  // One substep from [I; y]; renormalizes to Y2 * Y1^{-1} unconditionally.
  // Halves the substep while the Y1 block is ill-conditioned.
  const auto advance = [&](Matrix& y, double delta) {
    double remaining = delta;
    double step = delta;
    int halvings = 0;
    while (remaining > 0.0) {
      const double actual = std::min(step, remaining);
      const Matrix& e = propagator(actual);
      const Matrix y1 =
          e.topLeftCorner(l, l) + e.topRightCorner(l, k) * y;
      const Matrix y2 =
          e.bottomLeftCorner(k, l) + e.bottomRightCorner(k, k) * y;
      Eigen::PartialPivLU<Matrix> lu(y1);
      if (!(lu_rcond_guarded(lu) >= 1e-12)) {
        ++halvings;
        if (halvings > substep_limit) {
          throw SingularError(
              "exponential scheme: the denominator block stayed singular "
              "through the substep halving budget");
        }
        step = actual / 2.0;
        continue;
      }
      const Matrix yt = lu.transpose().solve(y2.transpose());
      y = yt.transpose();
      remaining -= actual;
    }
  };

  Trajectory out;
  out.times = t_grid;
  out.values.reserve(t_grid.size());
  Matrix y = proj.Y0;
  out.values.push_back(y);
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    const double span = t_grid[i] - t_grid[i - 1];
    const Index substeps =
        std::max<Index>(1, static_cast<Index>(std::ceil(span / base - 1e-12)));
    const double delta = span / static_cast<double>(substeps);
    for (Index q = 0; q < substeps; ++q) advance(y, delta);
    out.values.push_back(y);
  }
  return out;
}

Trajectory solve_projected_bdf(const ProjectedNDRE& proj, int s_order,
                               double h, double t_f, double newton_tol,
                               int newton_itermax) {
  check_shape(proj);
  const StepGrid grid = step_grid(h, t_f);
  bdf_table(s_order);  // validate the order up front

  Trajectory out;
  out.times.reserve(grid.steps + 1);
  out.values.reserve(grid.steps + 1);
  out.times.push_back(0.0);
  out.values.push_back(proj.Y0);

  Matrix y = proj.Y0;
  for (Index k = 0; k < grid.steps; ++k) {
    // Ramp through the lower orders until the history fills.
    const BdfTable tb = bdf_table(std::min<int>(s_order, k + 1));
    const double hb = grid.h * tb.beta;

    Matrix a = hb * proj.T_A;
    a.diagonal().array() += 0.5;
    Matrix d = hb * proj.T_D;
    d.diagonal().array() += 0.5;
    const Matrix s = hb * proj.S_m;
    Matrix q = hb * (proj.F_m * proj.G_m.transpose());
    for (std::size_t i = 1; i <= tb.alpha.size(); ++i) {
      q += tb.alpha[i - 1] * out.values[out.values.size() - i];
    }

    try {
      y = solve_small_nare_newton(a, d, s, q, y, newton_tol, newton_itermax).X;
    } catch (const ConvergenceError& e) {
      std::ostringstream msg;
      msg << "BDF step " << (k + 1) << " (t = "
          << grid.h * static_cast<double>(k + 1)
          << ") did not converge: " << e.what();
      throw ConvergenceError(msg.str());
    }
    out.times.push_back(grid.h * static_cast<double>(k + 1));
    out.values.push_back(y);
  }
  return out;
}

Trajectory solve_projected_rosenbrock2(const ProjectedNDRE& proj, double h,
                                       double gamma, double t_f) {
  check_shape(proj);
  const StepGrid grid = step_grid(h, t_f);

  Matrix ta = gamma * proj.T_A;
  ta.diagonal().array() -= 1.0 / (2.0 * grid.h);
  Matrix td = gamma * proj.T_D;
  td.diagonal().array() -= 1.0 / (2.0 * grid.h);

  Trajectory out;
  out.times.reserve(grid.steps + 1);
  out.values.reserve(grid.steps + 1);
  out.times.push_back(0.0);
  out.values.push_back(proj.Y0);

  Matrix y = proj.Y0;
  for (Index k = 0; k < grid.steps; ++k) {
    try {
      // A transiently unstable model can push the explicit quadratic
      // evaluations past the floating range; report that as a convergence
      // failure, not as malformed input further down.
      const auto guarded = [&](Matrix rhs) {
        if (!rhs.allFinite()) {
          std::ostringstream msg;
          msg << "Rosenbrock stage at t = "
              << grid.h * static_cast<double>(k + 1)
              << " overflowed; the model blows up or the step is too large";
          throw ConvergenceError(msg.str());
        }
        return rhs;
      };
      const Matrix h1 =
          solve_sylvester(ta, td, guarded(-projected_rhs(proj, y)));
      const Matrix h2 = solve_sylvester(
          ta, td,
          guarded(-projected_rhs(proj, y + h1) + (2.0 / grid.h) * h1));
      y += 1.5 * h1 + 0.5 * h2;
    } catch (const SingularError& e) {
      std::ostringstream msg;
      msg << "Rosenbrock stage at t = "
          << grid.h * static_cast<double>(k + 1)
          << " hit a singular shifted Sylvester operator; reduce the step "
             "size: "
          << e.what();
      throw SingularError(msg.str());
    }
    out.times.push_back(grid.h * static_cast<double>(k + 1));
    out.values.push_back(y);
  }
  return out;
}

}  // namespace ndre
