#include "lsqns/time_integration.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lsqns {

TimeGrid::TimeGrid(double final_time, int steps) : final_time(final_time), steps(steps) {
  if (steps < 1) throw std::invalid_argument("time grid needs at least one step");
  if (!(final_time > 0.0) || !std::isfinite(final_time)) throw std::invalid_argument("final time must be positive");
}

TimeGrid TimeGrid::from_step(double final_time, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("time step must be positive");
  const double ratio = final_time / dt;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, rounded)) {
    throw std::invalid_argument("time step " + std::to_string(dt) + " does not divide final time " +
                                std::to_string(final_time));
  }
  return TimeGrid(final_time, static_cast<int>(rounded));
}

FieldTrajectory FieldTrajectory::zeros(const TimeGrid& grid, Eigen::Index n_dofs) {
  FieldTrajectory t;
  t.grid = grid;
  t.velocity.assign(grid.steps + 1, Vector::Zero(n_dofs));
  return t;
}

Discretization::Discretization(Mesh mesh)
    : layout(std::move(mesh)),
      mass(assemble_mass(layout)),
      stiffness(assemble_stiffness(layout)),
      divergence(assemble_divergence(layout)) {}

ImplicitOperator::ImplicitOperator(const Discretization& disc, double mass_coef, const SparseMatrix& a)
    : disc_(&disc),
      mass_coef_(mass_coef),
      constrained_(std::in_place, system_block(a), disc.divergence, disc.layout.dirichlet()),
      factorization_(constrained_->matrix()) {}

SparseMatrix ImplicitOperator::system_block(const SparseMatrix& a) const {
  if (mass_coef_ == 0.0) return a;
  SparseMatrix block = mass_coef_ * disc_->mass + a;
  block.makeCompressed();
  return block;
}

void ImplicitOperator::update(const SparseMatrix& a) {
  constrained_.emplace(system_block(a), disc_->divergence, disc_->layout.dirichlet());
  factorization_.refactorize(constrained_->matrix());
}

StepResult ImplicitOperator::solve(const Vector& velocity_rhs, const Vector* boundary_values) const {
  const Vector rhs = constrained_->constrained_rhs(velocity_rhs, boundary_values);
  const Vector x = factorization_.solve(rhs);
  const int n_u = constrained_->n_velocity();
  StepResult out{x.head(n_u), x.tail(constrained_->n_pressure())};
  for (int d : disc_->layout.dirichlet().velocity_dofs) out.velocity[d] = boundary_values ? (*boundary_values)[d] : 0.0;
  return out;
}

StepResult implicit_step(const ImplicitOperator& op, const Vector& previous, const Vector& load,
                         const Vector* boundary_values) {
  Vector rhs = op.mass_coef() * (op.discretization().mass * previous);
  if (load.size() > 0) rhs += load;
  return op.solve(rhs, boundary_values);
}

Vector steady_stokes_initial(const ImplicitOperator& laplacian, const Vector& boundary_values) {
  const Vector zero = Vector::Zero(laplacian.discretization().layout.n_velocity_dofs());
  return laplacian.solve(zero, &boundary_values).velocity;
}

Vector steady_stokes_initial(const Discretization& disc, const Vector& boundary_values) {
  const ImplicitOperator laplacian(disc, 0.0, disc.stiffness);
  return steady_stokes_initial(laplacian, boundary_values);
}

FieldTrajectory unsteady_stokes_initial_guess(const ImplicitOperator& heat, const TimeGrid& grid, const Vector& u0,
                                              const Vector& boundary_values, const Levels& forcing,
                                              bool keep_pressure) {
  if (!forcing.empty() && static_cast<int>(forcing.size()) != grid.steps) {
    throw std::invalid_argument("forcing must provide one load per time step");
  }
  if (std::abs(heat.mass_coef() * grid.dt() - 1.0) > 1e-12) {
    throw std::invalid_argument("operator was factorized for a different time step");
  }
  FieldTrajectory y;
  y.grid = grid;
  y.velocity.reserve(grid.steps + 1);
  y.velocity.push_back(u0);
  if (keep_pressure) y.pressure.resize(grid.steps + 1);
  static const Vector no_load;
  for (int n = 0; n < grid.steps; ++n) {
    StepResult step = implicit_step(heat, y.velocity[n], forcing.empty() ? no_load : forcing[n], &boundary_values);
    y.velocity.push_back(std::move(step.velocity));
    if (keep_pressure) y.pressure[n + 1] = std::move(step.pressure);
  }
  return y;
}

FieldTrajectory unsteady_stokes_initial_guess(const Discretization& disc, const TimeGrid& grid, const Vector& u0,
                                              double nu_bar, const Vector& boundary_values, const Levels& forcing,
                                              bool keep_pressure) {
  if (!(nu_bar > 0.0)) throw std::invalid_argument("initialization viscosity must be positive");
  const SparseMatrix a = nu_bar * disc.stiffness;
  const ImplicitOperator heat(disc, 1.0 / grid.dt(), a);
  return unsteady_stokes_initial_guess(heat, grid, u0, boundary_values, forcing, keep_pressure);
}

}  // namespace lsqns
