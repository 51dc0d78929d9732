#include "lsqns/lsq_newton.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lsqns {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double dot_k(const SparseMatrix& k, const Vector& a, const Vector& b) { return a.dot(k * b); }

/// Real roots of p3 x^3 + p2 x^2 + p1 x + p0, polished by Newton steps.
std::vector<double> cubic_real_roots(double p3, double p2, double p1, double p0) {
  const double scale = std::max({std::abs(p3), std::abs(p2), std::abs(p1), std::abs(p0)});
  std::vector<double> roots;
  if (scale == 0.0) return roots;
  if (std::abs(p3) <= 1e-14 * scale) {
    if (std::abs(p2) <= 1e-14 * scale) {
      if (p1 != 0.0) roots.push_back(-p0 / p1);
    } else {
      const double disc = p1 * p1 - 4.0 * p2 * p0;
      if (disc >= 0.0) {
        // Numerically stable pair.
        const double s = -0.5 * (p1 + std::copysign(std::sqrt(disc), p1));
        if (s != 0.0) {
          roots.push_back(s / p2);
          roots.push_back(p0 / s);
        } else {
          roots.push_back(0.0);
        }
      }
    }
  } else {
    const double a = p2 / p3;
    const double b = p1 / p3;
    const double c = p0 / p3;
    const double shift = a / 3.0;
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double disc = 0.25 * q * q + p * p * p / 27.0;
    if (disc > 0.0) {
      const double sq = std::sqrt(disc);
      roots.push_back(std::cbrt(-0.5 * q + sq) + std::cbrt(-0.5 * q - sq) - shift);
    } else if (p == 0.0) {
      roots.push_back(-shift);
    } else {
      const double r = 2.0 * std::sqrt(-p / 3.0);
      const double arg = std::clamp(3.0 * q / (p * r), -1.0, 1.0);
      const double phi = std::acos(arg) / 3.0;
      for (int k = 0; k < 3; ++k) roots.push_back(r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0) - shift);
    }
  }
  for (double& x : roots) {
    for (int it = 0; it < 3; ++it) {
      const double f = ((p3 * x + p2) * x + p1) * x + p0;
      const double df = (3.0 * p3 * x + 2.0 * p2) * x + p1;
      if (df == 0.0) break;
      const double nx = x - f / df;
      if (!std::isfinite(nx)) break;
      x = nx;
    }
  }
  return roots;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string to_string(StepPolicy p) {
  switch (p) {
    case StepPolicy::Quartic:
      return "quartic";
    case StepPolicy::Cheap:
      return "cheap";
    case StepPolicy::FixedOne:
      return "fixed1";
  }
  return "?";
}

std::string to_string(Functional f) { return f == Functional::E ? "E" : "Etilde"; }

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Converged:
      return "converged";
    case Outcome::Diverged:
      return "diverged";
    case Outcome::IterationCap:
      return "iteration_cap";
  }
  return "?";
}

double quartic_energy(double a, double b, double c, double lambda) {
  const double one_minus = 1.0 - lambda;
  const double l2 = lambda * lambda;
  return 0.5 * (one_minus * one_minus * a + 2.0 * l2 * one_minus * b + l2 * l2 * c);
}

LineSearchResult line_search_quartic(double a, double b, double c, double m) {
  if (!(a > 0.0)) throw std::invalid_argument("line_search_quartic: a must be positive (iterate already converged?)");
  if (!(c >= 0.0)) throw std::invalid_argument("line_search_quartic: c must be non-negative");
  if (!(m >= 1.0)) throw std::invalid_argument("line_search_quartic: m must be >= 1");
  if (b * b > a * c * (1.0 + 1e-8) + 1e-300) {
    throw std::invalid_argument("line_search_quartic: coefficients violate b^2 <= a c");
  }
  // q'(l) = 2c l^3 - 3b l^2 + (a + 2b) l - a
  std::vector<double> candidates = cubic_real_roots(2.0 * c, -3.0 * b, a + 2.0 * b, -a);
  candidates.push_back(m);
  LineSearchResult best{m, quartic_energy(a, b, c, m)};
  for (double l : candidates) {
    if (!(l > 0.0 && l <= m)) continue;
    const double e = quartic_energy(a, b, c, l);
    if (e < best.energy || (e == best.energy && l < best.lambda)) best = {l, e};
  }
  return best;
}

double cheap_step_rule(double energy, double norm_vbb, double m) {
  if (!(energy > 0.0)) throw std::invalid_argument("cheap_step_rule: energy must be positive");
  if (!(m >= 1.0)) throw std::invalid_argument("cheap_step_rule: m must be >= 1");
  const double cap = std::min(1.0, m);
  if (norm_vbb <= 0.0) return cap;
  const double lambda = std::sqrt(energy) / (std::numbers::sqrt2 * norm_vbb);
  return std::clamp(lambda, std::numeric_limits<double>::min(), cap);
}

SchemeOperators::SchemeOperators(std::shared_ptr<const Discretization> disc, const TimeGrid& grid)
    : disc_(std::move(disc)),
      grid_(grid),
      heat_(*disc_, 1.0 / grid.dt(), disc_->stiffness),
      laplacian_(*disc_, 0.0, disc_->stiffness) {}

double SchemeOperators::l2v_inner(const Levels& u1, const Levels& u2) const {
  double s = 0.0;
  for (int n = 1; n <= grid_.steps; ++n) s += dot_k(disc_->stiffness, u1[n], u2[n]);
  return grid_.dt() * s;
}

double SchemeOperators::l2v_norm(const Levels& u) const { return std::sqrt(l2v_inner(u, u)); }

LeastSquaresNewton::LeastSquaresNewton(std::shared_ptr<const SchemeOperators> ops, double nu, Levels forcing)
    : ops_(std::move(ops)), nu_(nu), forcing_(std::move(forcing)) {
  if (!(nu_ > 0.0)) throw std::invalid_argument("viscosity must be positive");
  if (!forcing_.empty() && static_cast<int>(forcing_.size()) != ops_->grid().steps) {
    throw std::invalid_argument("forcing must provide one load per time step");
  }
}

Levels LeastSquaresNewton::residual(const FieldTrajectory& y) const {
  const auto& disc = ops_->disc();
  const double inv_dt = 1.0 / ops_->dt();
  const int steps = ops_->grid().steps;
  Levels r(steps);
  for (int n = 0; n < steps; ++n) {
    const Vector& next = y.velocity[n + 1];
    r[n] = inv_dt * (disc.mass * (next - y.velocity[n])) + nu_ * (disc.stiffness * next) +
           convection_action(disc.layout, next, next);
    if (!forcing_.empty()) r[n] -= forcing_[n];
  }
  return r;
}

Levels LeastSquaresNewton::corrector(const FieldTrajectory& y) const {
  const Levels f = residual(y);
  const auto& disc = ops_->disc();
  const double inv_dt = 1.0 / ops_->dt();
  Levels v;
  v.reserve(f.size() + 1);
  v.push_back(Vector::Zero(disc.layout.n_velocity_dofs()));
  for (std::size_t n = 0; n < f.size(); ++n) {
    v.push_back(ops_->heat().solve(inv_dt * (disc.mass * v[n]) - f[n]).velocity);
  }
  return v;
}

Levels LeastSquaresNewton::lift_functionals(const Levels& g) const {
  Levels h;
  h.reserve(g.size());
  for (const Vector& gn : g) h.push_back(ops_->laplacian().solve(-gn).velocity);
  return h;
}

Levels LeastSquaresNewton::riesz_lift(const Levels& u) const {
  const auto& disc = ops_->disc();
  const double inv_dt = 1.0 / ops_->dt();
  Levels g;
  g.reserve(u.size() - 1);
  for (std::size_t n = 0; n + 1 < u.size(); ++n) g.push_back(inv_dt * (disc.mass * (u[n + 1] - u[n])));
  return lift_functionals(g);
}

Levels LeastSquaresNewton::linearized_solve(const FieldTrajectory& y, const Levels& rhs_terms) const {
  const auto& disc = ops_->disc();
  const double inv_dt = 1.0 / ops_->dt();
  const SparseMatrix viscous = nu_ * disc.stiffness;
  Levels out;
  out.reserve(rhs_terms.size() + 1);
  out.push_back(Vector::Zero(disc.layout.n_velocity_dofs()));
  std::optional<ImplicitOperator> op;
  for (std::size_t n = 0; n < rhs_terms.size(); ++n) {
    SparseMatrix a = viscous + assemble_linearized_convection(disc.layout, y.velocity[n + 1]);
    a.makeCompressed();
    if (!op) {
      op.emplace(disc, inv_dt, a);
    } else {
      op->update(a);
    }
    ++linearized_count_;
    try {
      out.push_back(op->solve(inv_dt * (disc.mass * out[n]) + rhs_terms[n]).velocity);
    } catch (const SolverError& e) {
      throw SolverError("linearized solve at time level " + std::to_string(n + 1) + ": " + e.what());
    }
  }
  return out;
}

Levels LeastSquaresNewton::direction(const FieldTrajectory& y, const Levels& v) const {
  const auto& disc = ops_->disc();
  const double inv_dt = 1.0 / ops_->dt();
  Levels rhs;
  rhs.reserve(v.size() - 1);
  for (std::size_t n = 0; n + 1 < v.size(); ++n) {
    rhs.push_back(-(inv_dt * (disc.mass * (v[n + 1] - v[n])) + disc.stiffness * v[n + 1]));
  }
  return linearized_solve(y, rhs);
}

Levels LeastSquaresNewton::direction_from_residual(const FieldTrajectory& y, const Levels& residual) const {
  return linearized_solve(y, residual);
}

Levels LeastSquaresNewton::nonlinear_corrector(const Levels& direction) const {
  const auto& disc = ops_->disc();
  const double inv_dt = 1.0 / ops_->dt();
  Levels vbb;
  vbb.reserve(direction.size());
  vbb.push_back(Vector::Zero(disc.layout.n_velocity_dofs()));
  for (std::size_t n = 0; n + 1 < direction.size(); ++n) {
    const Vector& yn = direction[n + 1];
    vbb.push_back(ops_->heat().solve(inv_dt * (disc.mass * vbb[n]) - convection_action(disc.layout, yn, yn)).velocity);
  }
  return vbb;
}

double LeastSquaresNewton::a0_inner(const Levels& u1, const Levels& w1, const Levels& u2, const Levels& w2) const {
  const auto& k = ops_->disc().stiffness;
  // Both orders are summed so that swapping the arguments is exact in floating point.
  auto sym = [&](const Vector& p, const Vector& q) { return 0.5 * (dot_k(k, p, q) + dot_k(k, q, p)); };
  double s = 0.0;
  for (std::size_t n = 0; n < w1.size(); ++n) s += sym(u1[n + 1], u2[n + 1]) + sym(w1[n], w2[n]);
  return ops_->dt() * s;
}

double LeastSquaresNewton::energy_of(const FieldTrajectory& y) const {
  const Levels v = corrector(y);
  return energy(v, riesz_lift(v));
}

double LeastSquaresNewton::residual_energy_of(const FieldTrajectory& y) const {
  const Levels h = lift_functionals(residual(y));
  const auto& k = ops_->disc().stiffness;
  double s = 0.0;
  for (const Vector& hn : h) s += dot_k(k, hn, hn);
  return 0.5 * ops_->dt() * s;
}

CorrectorBundle LeastSquaresNewton::bundle(const FieldTrajectory& y) const {
  CorrectorBundle out;
  out.v = corrector(y);
  out.w = riesz_lift(out.v);
  out.a = a0_inner(out.v, out.w, out.v, out.w);
  out.direction = direction(y, out.v);
  out.vbb = nonlinear_corrector(out.direction);
  out.wbb = riesz_lift(out.vbb);
  out.b = a0_inner(out.v, out.w, out.vbb, out.wbb);
  out.c = a0_inner(out.vbb, out.wbb, out.vbb, out.wbb);
  return out;
}

FieldTrajectory LeastSquaresNewton::step(const FieldTrajectory& y, const Levels& direction, double lambda) {
  FieldTrajectory next;
  next.grid = y.grid;
  next.velocity.reserve(y.velocity.size());
  next.velocity.push_back(y.velocity[0]);
  for (std::size_t n = 1; n < y.velocity.size(); ++n) next.velocity.push_back(y.velocity[n] - lambda * direction[n]);
  return next;
}

SolveResult LeastSquaresNewton::solve(FieldTrajectory y0, const SolveOptions& options) const {
  if (!(options.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (!(options.m >= 1.0)) throw std::invalid_argument("step bound m must be >= 1");
  if (options.max_iterations < 0) throw std::invalid_argument("iteration cap must be non-negative");
  if (static_cast<int>(y0.velocity.size()) != ops_->grid().steps + 1) {
    throw std::invalid_argument("initial trajectory does not match the time grid");
  }
  return options.functional == Functional::E ? solve_e(std::move(y0), options) : solve_etilde(std::move(y0), options);
}

namespace {

/// Shared outer loop. `evaluate` returns sqrt(2 J(y)) and prepares state;
/// `step_of` returns (direction, lambda) for the prepared state.
template <class Evaluate, class StepOf>
SolveResult outer_loop(const SchemeOperators& ops, FieldTrajectory y, const SolveOptions& options, Evaluate&& evaluate,
                       StepOf&& step_of) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveResult result;
  double r0 = kNaN;
  double rel_increment = kNaN;
  for (int k = 0;; ++k) {
    IterationRecord rec{k, kNaN, kNaN, rel_increment, 0.0};
    auto finish = [&](Outcome o) {
      rec.wall_time = seconds_since(t0);
      result.history.push_back(rec);
      if (options.on_iteration) options.on_iteration(rec);
      result.outcome = o;
      result.y = std::move(y);
      return result;
    };
    try {
      rec.sqrt2E = evaluate(y);
      if (k == 0) r0 = rec.sqrt2E;
      if (!std::isfinite(rec.sqrt2E) || rec.sqrt2E > options.divergence_factor * r0) return finish(Outcome::Diverged);
      if (rec.sqrt2E <= options.tol) return finish(Outcome::Converged);
      if (k >= options.max_iterations) return finish(Outcome::IterationCap);
      auto [direction, lambda] = step_of(y, rec.sqrt2E);
      rec.lambda = lambda;
      const double y_norm = ops.l2v_norm(y.velocity);
      rel_increment = y_norm > 0.0 ? lambda * ops.l2v_norm(direction) / y_norm : kNaN;
      y = LeastSquaresNewton::step(y, direction, lambda);
    } catch (const SolverError&) {
      // A linear solve breaking down on a growing iterate is the blow-up
      // of the undamped method, not an artifact failure.
      if (k > 0 && std::isfinite(r0) && !(rec.sqrt2E <= r0)) {
        rec.lambda = kNaN;
        return finish(Outcome::Diverged);
      }
      throw;
    }
    rec.wall_time = seconds_since(t0);
    result.history.push_back(rec);
    if (options.on_iteration) options.on_iteration(rec);
  }
}

}  // namespace

SolveResult LeastSquaresNewton::solve_e(FieldTrajectory y0, const SolveOptions& options) const {
  Levels v;
  Levels w;
  double a = 0.0;
  auto evaluate = [&](const FieldTrajectory& y) {
    v = corrector(y);
    w = riesz_lift(v);
    a = a0_inner(v, w, v, w);
    return std::sqrt(a);
  };
  auto step_of = [&](const FieldTrajectory& y, double) {
    Levels dir = direction(y, v);
    double lambda = 1.0;
    if (options.policy != StepPolicy::FixedOne) {
      const Levels vbb = nonlinear_corrector(dir);
      const Levels wbb = riesz_lift(vbb);
      const double c = a0_inner(vbb, wbb, vbb, wbb);
      if (options.policy == StepPolicy::Quartic) {
        const double b = a0_inner(v, w, vbb, wbb);
        lambda = line_search_quartic(a, b, c, options.m).lambda;
      } else {
        lambda = cheap_step_rule(0.5 * a, std::sqrt(c), options.m);
      }
    }
    return std::pair{std::move(dir), lambda};
  };
  return outer_loop(*ops_, std::move(y0), options, evaluate, step_of);
}

SolveResult LeastSquaresNewton::solve_etilde(FieldTrajectory y0, const SolveOptions& options) const {
  const auto& disc = ops_->disc();
  const auto& k = disc.stiffness;
  auto lift_inner = [&](const Levels& h1, const Levels& h2) {
    double s = 0.0;
    for (std::size_t n = 0; n < h1.size(); ++n) s += dot_k(k, h1[n], h2[n]);
    return ops_->dt() * s;
  };
  Levels f;
  Levels h;
  double a = 0.0;
  auto evaluate = [&](const FieldTrajectory& y) {
    f = residual(y);
    h = lift_functionals(f);
    a = lift_inner(h, h);
    return std::sqrt(a);
  };
  auto step_of = [&](const FieldTrajectory& y, double) {
    Levels dir = direction_from_residual(y, f);
    double lambda = 1.0;
    if (options.policy != StepPolicy::FixedOne) {
      Levels quad;
      quad.reserve(dir.size() - 1);
      for (std::size_t n = 1; n < dir.size(); ++n) quad.push_back(convection_action(disc.layout, dir[n], dir[n]));
      const Levels hbb = lift_functionals(quad);
      const double c = lift_inner(hbb, hbb);
      if (options.policy == StepPolicy::Quartic) {
        lambda = line_search_quartic(a, lift_inner(h, hbb), c, options.m).lambda;
      } else {
        lambda = cheap_step_rule(0.5 * a, std::sqrt(c), options.m);
      }
    }
    return std::pair{std::move(dir), lambda};
  };
  return outer_loop(*ops_, std::move(y0), options, evaluate, step_of);
}

FieldTrajectory initial_guess(const ProblemSetup& setup) {
  const auto& ops = *setup.ops;
  if (setup.nu_bar == 1.0) {
    return unsteady_stokes_initial_guess(ops.heat(), ops.grid(), setup.u0, setup.boundary_values, setup.forcing);
  }
  return unsteady_stokes_initial_guess(ops.disc(), ops.grid(), setup.u0, setup.nu_bar, setup.boundary_values,
                                       setup.forcing);
}

SolveResult damped_newton_solve(const ProblemSetup& setup, double nu, const SolveOptions& options) {
  const LeastSquaresNewton solver(setup.ops, nu, setup.forcing);
  return solver.solve(initial_guess(setup), options);
}

std::vector<ContinuationStage> continuation_in_nu(const ProblemSetup& setup, const std::vector<double>& schedule,
                                                  const SolveOptions& options) {
  if (schedule.empty()) throw std::invalid_argument("continuation schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 0.0)) throw std::invalid_argument("continuation schedule entries must be positive");
    if (i > 0 && !(schedule[i] < schedule[i - 1])) {
      throw std::invalid_argument("continuation schedule must be strictly decreasing");
    }
  }
  std::vector<ContinuationStage> stages;
  FieldTrajectory y = initial_guess(setup);
  for (double nu : schedule) {
    const LeastSquaresNewton solver(setup.ops, nu, setup.forcing);
    SolveResult r = solver.solve(y, options);
    const bool ok = r.outcome == Outcome::Converged;
    if (ok) y = r.y;
    stages.push_back({nu, std::move(r)});
    if (!ok) break;
  }
  return stages;
}

SolveResult residual_variant_solve(const ProblemSetup& setup, double nu, SolveOptions options) {
  options.functional = Functional::ETilde;
  return damped_newton_solve(setup, nu, options);
}

}  // namespace lsqns
