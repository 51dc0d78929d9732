#pragma once

#include "lsqns/lsq_newton.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsqns {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ProblemKind { Cavity, Manufactured };

/// Validated experiment description. Built-in geometries are "semidisk" and
/// "unit_square"; anything else is the path of a Triangle mesh (with or
/// without the .node/.ele extension).
struct ExperimentConfig {
  std::string geometry;
  double h = 0.05;
  double final_time = 2.0;
  double dt = 0.02;
  double nu = 0.0;
  double nu_bar = 1.0;
  ProblemKind problem = ProblemKind::Cavity;
  /// Manufactured case: number of meshes, each halving h and quartering dt.
  int refinements = 3;
  double m = 2.0;
  double tol = 1e-8;
  StepPolicy policy = StepPolicy::Quartic;
  Functional variant = Functional::E;
  int max_iterations = 100;
  std::vector<double> schedule;
  std::filesystem::path output_dir = "output";
  std::vector<double> snapshots;

  /// Viscosities solved in order: the schedule, or {nu}.
  std::vector<double> viscosities() const;
};

/// Parses INI text:
///
///   [mesh]    geometry, h
///   [time]    T, dt
///   [physics] nu, nu_bar, problem (cavity|manufactured), refinements, schedule
///   [solver]  m, tol, policy (quartic|cheap|fixed1), variant (E|Etilde), max_iterations
///   [output]  directory, snapshots
///
/// Numbers accept fractions such as 1/500; lists are comma separated.
/// Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

StepPolicy parse_policy(const std::string& s);
Functional parse_variant(const std::string& s);
/// Comma-separated viscosities, strictly decreasing and positive.
std::vector<double> parse_schedule(const std::string& s);

/// Builds the mesh named by a geometry string at target size h.
Mesh build_mesh(const std::string& geometry, double h);

/// Exact solution u = curl(sin^2(pi x) sin^2(pi y) e^{-t}) on the unit square
/// and the forcing that makes it a Navier-Stokes solution with zero pressure.
struct ManufacturedSolution {
  double nu;

  std::array<double, 2> velocity(const Point2& p, double t) const;
  /// (du1/dx, du1/dy, du2/dx, du2/dy)
  std::array<double, 4> gradient(const Point2& p, double t) const;
  std::array<double, 2> forcing(const Point2& p, double t) const;
};

/// One mesh of a manufactured refinement study.
struct RefinementLevel {
  int n = 0;
  double h = 0.0;
  double dt = 0.0;
  double error = 0.0;  ///< L^2(0,T;V) error against the exact solution
  int iterations = 0;
  bool converged = false;
};

struct StageReport {
  double nu = 0.0;
  SolveResult result;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<StageReport> stages;
  int n_triangles = 0;
  int n_vertices = 0;
  int n_velocity_dofs = 0;
  int n_pressure_dofs = 0;
  double wall_time = 0.0;
  std::vector<RefinementLevel> refinement;
  std::optional<double> convergence_rate;
  std::vector<std::string> written_files;

  bool converged() const;
  Outcome outcome() const;
  double final_sqrt2E() const;
};

/// Least-squares slope of log(error) against log(h).
double fitted_rate(const std::vector<RefinementLevel>& levels);

/// Formats the history as CSV with header k,rel_increment,sqrt2E,lambda.
/// Missing values are left empty.
std::string history_csv(const std::vector<IterationRecord>& history);

/// Lid-driven cavity: lid data on Lid edges, zero elsewhere, steady Stokes
/// initial condition and zero forcing.
ProblemSetup cavity_setup(std::shared_ptr<const SchemeOperators> ops, double nu_bar = 1.0);

/// Runs the configured solve and writes history.csv, report.txt and the
/// requested snapshots into config.output_dir. Progress goes to `log` when
/// non-null.
RunReport run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

/// 0 when every stage converged, 2 otherwise.
int exit_status(const RunReport& report);

}  // namespace lsqns
