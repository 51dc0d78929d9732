#pragma once

#include "lsqns/time_integration.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace lsqns {

/// Space-time operators that do not depend on the viscosity or on the
/// iterate: the heat-type operator (M/dt + K) and the Stokes Laplacian K,
/// each factorized once and shared by every scheme and outer iteration.
class SchemeOperators {
 public:
  SchemeOperators(std::shared_ptr<const Discretization> disc, const TimeGrid& grid);

  const Discretization& disc() const { return *disc_; }
  const SpaceLayout& layout() const { return disc_->layout; }
  const TimeGrid& grid() const { return grid_; }
  double dt() const { return grid_.dt(); }

  /// (M/dt + K): corrector, auxiliary corrector and unit-viscosity initialization.
  const ImplicitOperator& heat() const { return heat_; }
  /// K with the divergence constraint: Riesz lifts and the steady Stokes solve.
  const ImplicitOperator& laplacian() const { return laplacian_; }

  /// Numeric factorizations of the two constant operators so far.
  std::size_t constant_factorizations() const {
    return heat_.factorization_count() + laplacian_.factorization_count();
  }

  /// L^2(0,T;V) norm over levels 1..N: sqrt(sum dt |grad u^n|^2).
  double l2v_norm(const Levels& u) const;
  /// sum over levels 1..N of dt (grad u1^n, grad u2^n).
  double l2v_inner(const Levels& u1, const Levels& u2) const;

 private:
  std::shared_ptr<const Discretization> disc_;
  TimeGrid grid_;
  ImplicitOperator heat_;
  ImplicitOperator laplacian_;
};

/// Everything produced for one outer iterate: corrector v and its lift w,
/// direction Y1, auxiliary corrector vbb and its lift wbb, and the three A0
/// products a = |v|^2, b = <v, vbb>, c = |vbb|^2.
struct CorrectorBundle {
  Levels v;
  Levels w;
  Levels direction;
  Levels vbb;
  Levels wbb;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double energy() const { return 0.5 * a; }
};

enum class StepPolicy { Quartic, Cheap, FixedOne };
enum class Functional { E, ETilde };
enum class Outcome { Converged, Diverged, IterationCap };

std::string to_string(StepPolicy p);
std::string to_string(Functional f);
std::string to_string(Outcome o);

/// One row of the convergence history. `lambda` is the step taken from this
/// iterate (NaN on the last row); `rel_increment` is NaN on row 0.
struct IterationRecord {
  int k = 0;
  double sqrt2E = 0.0;
  double lambda = 0.0;
  double rel_increment = 0.0;
  double wall_time = 0.0;
};

struct LineSearchResult {
  double lambda;
  double energy;
};

/// Minimizes q(l) = 1/2 [(1-l)^2 a + 2 l^2 (1-l) b + l^4 c] over (0, m].
///
/// Candidates are the real roots of the cubic q' in (0, m] plus the endpoint
/// m; the smallest q wins, ties go to the smaller step. Requires a > 0,
/// c >= 0, b^2 <= a c (up to rounding) and m >= 1.
LineSearchResult line_search_quartic(double a, double b, double c, double m);

/// Evaluates the quartic q(l) of line_search_quartic.
double quartic_energy(double a, double b, double c, double lambda);

/// min(1, sqrt(E) / (sqrt(2) |vbb|)) clamped to (0, min(1, m)].
double cheap_step_rule(double energy, double norm_vbb, double m);

struct SolveOptions {
  double tol = 1e-8;
  double m = 2.0;
  StepPolicy policy = StepPolicy::Quartic;
  Functional functional = Functional::E;
  int max_iterations = 100;
  double divergence_factor = 1e6;
  /// Called after each record is finalized (for progress output).
  std::function<void(const IterationRecord&)> on_iteration;
};

struct SolveResult {
  FieldTrajectory y;
  std::vector<IterationRecord> history;
  Outcome outcome = Outcome::IterationCap;
  int iterations() const { return static_cast<int>(history.size()) - 1; }
  double final_sqrt2E() const { return history.empty() ? 0.0 : history.back().sqrt2E; }
};

/// Least-squares damped Newton solver for one viscosity.
///
/// All schemes are backward Euler with homogeneous boundary data except the
/// iterate y itself, which carries the prescribed boundary values and keeps
/// level 0 equal to the initial condition.
class LeastSquaresNewton {
 public:
  /// `forcing` holds the loads f^n for n = 0..N-1 (empty for f = 0).
  LeastSquaresNewton(std::shared_ptr<const SchemeOperators> ops, double nu, Levels forcing = {});

  const SchemeOperators& operators() const { return *ops_; }
  double viscosity() const { return nu_; }

  /// Navier-Stokes residual M (y^{n+1} - y^n)/dt + nu K y^{n+1} + C(y^{n+1}) y^{n+1} - f^n.
  Levels residual(const FieldTrajectory& y) const;

  /// Corrector v: (M/dt + K) v^{n+1} = M v^n / dt - F^n(y), v^0 = 0.
  Levels corrector(const FieldTrajectory& y) const;
  /// Riesz lift of the discrete time derivative: K w^n = -M (u^{n+1} - u^n)/dt
  /// in the divergence-free space; N levels.
  Levels riesz_lift(const Levels& u) const;
  /// Lift of an arbitrary sequence of N functionals: K h^n = -g^n.
  Levels lift_functionals(const Levels& g) const;
  /// Descent direction Y1: linearized backward Euler driven by v.
  Levels direction(const FieldTrajectory& y, const Levels& v) const;
  /// Newton direction driven directly by the residual: F'(y) Y1 = F(y).
  Levels direction_from_residual(const FieldTrajectory& y, const Levels& residual) const;
  /// Auxiliary corrector of the quadratic remainder C(Y1) Y1.
  Levels nonlinear_corrector(const Levels& direction) const;

  /// <u1, u2>_{A0} = sum_n dt [(grad u1^{n+1}, grad u2^{n+1}) + (grad w1^n, grad w2^n)].
  double a0_inner(const Levels& u1, const Levels& w1, const Levels& u2, const Levels& w2) const;
  double energy(const Levels& v, const Levels& w) const { return 0.5 * a0_inner(v, w, v, w); }
  /// E(y) computed from scratch.
  double energy_of(const FieldTrajectory& y) const;
  /// Residual functional 1/2 sum_n dt |grad h^n|^2 with h the lift of F(y).
  double residual_energy_of(const FieldTrajectory& y) const;

  /// v, w, Y1, vbb, wbb and the A0 products for the iterate y.
  CorrectorBundle bundle(const FieldTrajectory& y) const;

  /// y - lambda * Y1 (level 0 untouched).
  static FieldTrajectory step(const FieldTrajectory& y, const Levels& direction, double lambda);

  SolveResult solve(FieldTrajectory y0, const SolveOptions& options) const;

  /// Numeric factorizations of the per-level linearized operators.
  std::size_t linearized_factorizations() const { return linearized_count_; }

 private:
  SolveResult solve_e(FieldTrajectory y0, const SolveOptions& options) const;
  SolveResult solve_etilde(FieldTrajectory y0, const SolveOptions& options) const;
  Levels linearized_solve(const FieldTrajectory& y, const Levels& rhs_terms) const;

  std::shared_ptr<const SchemeOperators> ops_;
  double nu_;
  Levels forcing_;
  mutable std::size_t linearized_count_ = 0;
};

/// Problem data shared by the drivers.
struct ProblemSetup {
  std::shared_ptr<const SchemeOperators> ops;
  Vector boundary_values;
  Vector u0;
  Levels forcing;
  double nu_bar = 1.0;
};

/// Unsteady Stokes initialization with viscosity nu_bar (reuses the heat
/// factorization when nu_bar = 1).
FieldTrajectory initial_guess(const ProblemSetup& setup);

SolveResult damped_newton_solve(const ProblemSetup& setup, double nu, const SolveOptions& options);

struct ContinuationStage {
  double nu;
  SolveResult result;
};

/// Solves for each viscosity of a strictly decreasing schedule, warm-starting
/// from the previous converged trajectory. Stops after a stage that does not
/// converge. Throws std::invalid_argument for an empty or non-decreasing
/// schedule.
std::vector<ContinuationStage> continuation_in_nu(const ProblemSetup& setup, const std::vector<double>& schedule,
                                                  const SolveOptions& options);

/// Solve driven by the residual functional (Functional::ETilde).
SolveResult residual_variant_solve(const ProblemSetup& setup, double nu, SolveOptions options);

}  // namespace lsqns
