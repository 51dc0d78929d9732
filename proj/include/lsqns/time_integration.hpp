#pragma once

#include "lsqns/fem.hpp"
#include "lsqns/sparse_solve.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

namespace lsqns {

/// Uniform grid t_n = n * dt, n = 0..N, dt = T / N.
struct TimeGrid {
  double final_time = 1.0;
  int steps = 1;

  TimeGrid() = default;
  TimeGrid(double final_time, int steps);
  /// Throws std::invalid_argument unless T / dt is an integer within 1e-9.
  static TimeGrid from_step(double final_time, double dt);

  double dt() const { return final_time / steps; }
  double time(int n) const { return n * dt(); }
};

using Levels = std::vector<Vector>;

/// Velocity levels 0..N on one layout, with optional pressure levels 1..N
/// (pressure[0] is left empty).
struct FieldTrajectory {
  TimeGrid grid;
  Levels velocity;
  Levels pressure;

  static FieldTrajectory zeros(const TimeGrid& grid, Eigen::Index n_dofs);
  int steps() const { return grid.steps; }
};

/// Layout plus the constant finite-element matrices every scheme uses.
struct Discretization {
  explicit Discretization(Mesh mesh);

  SpaceLayout layout;
  SparseMatrix mass;
  SparseMatrix stiffness;
  SparseMatrix divergence;
};

struct StepResult {
  Vector velocity;
  Vector pressure;
};

/// Factorized saddle operator of (mass_coef * M + A) with the layout's
/// Dirichlet set and pressure pin.
///
/// Nonhomogeneous boundary values are lifted into the right-hand side, so one
/// factorization serves homogeneous and nonhomogeneous solves alike.
class ImplicitOperator {
 public:
  ImplicitOperator(const Discretization& disc, double mass_coef, const SparseMatrix& a);

  /// Refactorizes with a new A of identical sparsity (symbolic analysis reused).
  void update(const SparseMatrix& a);

  /// Solves with the given velocity right-hand side. Constrained entries of
  /// the result equal the boundary values (zero when null) exactly.
  StepResult solve(const Vector& velocity_rhs, const Vector* boundary_values = nullptr) const;

  double mass_coef() const { return mass_coef_; }
  const Discretization& discretization() const { return *disc_; }
  std::size_t factorization_count() const { return factorization_.numeric_count(); }
  const Factorization& factorization() const { return factorization_; }

 private:
  SparseMatrix system_block(const SparseMatrix& a) const;

  const Discretization* disc_;
  double mass_coef_;
  std::optional<ConstrainedOperator> constrained_;
  Factorization factorization_;
};

/// One backward-Euler step: solves (M/dt + A) u + B^T p = M u_prev / dt + load.
StepResult implicit_step(const ImplicitOperator& op, const Vector& previous, const Vector& load,
                         const Vector* boundary_values = nullptr);

/// Steady Stokes with unit viscosity and the given boundary values.
Vector steady_stokes_initial(const Discretization& disc, const Vector& boundary_values);
Vector steady_stokes_initial(const ImplicitOperator& laplacian, const Vector& boundary_values);

/// Backward-Euler Stokes trajectory with viscosity nu_bar from u0, boundary
/// values held constant in time and loads f^n (empty = zero forcing).
FieldTrajectory unsteady_stokes_initial_guess(const ImplicitOperator& heat, const TimeGrid& grid, const Vector& u0,
                                              const Vector& boundary_values, const Levels& forcing = {},
                                              bool keep_pressure = false);
FieldTrajectory unsteady_stokes_initial_guess(const Discretization& disc, const TimeGrid& grid, const Vector& u0,
                                              double nu_bar, const Vector& boundary_values,
                                              const Levels& forcing = {}, bool keep_pressure = false);

}  // namespace lsqns
