#include "lsqns/experiment.hpp"

#include "lsqns/postprocess.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

namespace lsqns {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"mesh", {"geometry", "h"}},
      {"time", {"T", "dt"}},
      {"physics", {"nu", "nu_bar", "problem", "refinements", "schedule"}},
      {"solver", {"m", "tol", "policy", "variant", "max_iterations"}},
      {"output", {"directory", "snapshots"}},
  };
  return keys;
}

double parse_real(const std::string& key, std::string text) {
  boost::algorithm::trim(text);
  auto to_double = [&](std::string_view s) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || s.empty()) {
      throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return v;
  };
  const auto slash = text.find('/');
  double v = 0.0;
  if (slash == std::string::npos) {
    v = to_double(text);
  } else {
    std::string num = text.substr(0, slash);
    std::string den = text.substr(slash + 1);
    boost::algorithm::trim(num);
    boost::algorithm::trim(den);
    const double d = to_double(den);
    if (d == 0.0) throw ConfigError(key + ": zero denominator in '" + text + "'");
    v = to_double(num) / d;
  }
  if (!std::isfinite(v)) throw ConfigError(key + ": value must be finite");
  return v;
}

int parse_int(const std::string& key, std::string text) {
  boost::algorithm::trim(text);
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  }
  return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::algorithm::is_any_of(","));
  std::vector<double> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (p.empty()) continue;
    out.push_back(parse_real(key, p));
  }
  return out;
}

std::string format_real(double v, const char* fmt = "%.12e") {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::vector<double> ExperimentConfig::viscosities() const {
  return schedule.empty() ? std::vector<double>{nu} : schedule;
}

StepPolicy parse_policy(const std::string& s) {
  if (s == "quartic") return StepPolicy::Quartic;
  if (s == "cheap") return StepPolicy::Cheap;
  if (s == "fixed1") return StepPolicy::FixedOne;
  throw ConfigError("solver.policy: expected quartic, cheap or fixed1, got '" + s + "'");
}

Functional parse_variant(const std::string& s) {
  if (s == "E") return Functional::E;
  if (s == "Etilde") return Functional::ETilde;
  throw ConfigError("solver.variant: expected E or Etilde, got '" + s + "'");
}

std::vector<double> parse_schedule(const std::string& s) {
  std::vector<double> out = parse_list("physics.schedule", s);
  if (out.empty()) throw ConfigError("physics.schedule: empty list");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(out[i] > 0.0)) throw ConfigError("physics.schedule: viscosities must be positive");
    if (i > 0 && !(out[i] < out[i - 1])) throw ConfigError("physics.schedule: must be strictly decreasing");
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section + ": key outside of a section");
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError(section + ": unknown section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!it->second.contains(key)) throw ConfigError(full + ": unknown key");
      values[full] = value.data();
    }
  }
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return boost::algorithm::trim_copy(it->second);
  };

  ExperimentConfig c;
  if (auto g = get("mesh.geometry")) {
    c.geometry = *g;
  } else {
    throw ConfigError("mesh.geometry: required key missing");
  }
  if (c.geometry.empty()) throw ConfigError("mesh.geometry: empty value");
  if (auto v = get("mesh.h")) c.h = parse_real("mesh.h", *v);
  if (!(c.h > 0.0)) throw ConfigError("mesh.h: must be positive");

  c.problem = c.geometry == "unit_square" ? ProblemKind::Manufactured : ProblemKind::Cavity;
  if (auto v = get("physics.problem")) {
    if (*v == "cavity") {
      c.problem = ProblemKind::Cavity;
    } else if (*v == "manufactured") {
      c.problem = ProblemKind::Manufactured;
    } else {
      throw ConfigError("physics.problem: expected cavity or manufactured, got '" + *v + "'");
    }
  }
  if (c.problem == ProblemKind::Manufactured) {
    c.final_time = 0.1;
    c.dt = 0.025;
    c.h = get("mesh.h") ? c.h : 0.25;
    if (c.geometry != "unit_square") throw ConfigError("physics.problem: manufactured case needs unit_square");
  }

  if (auto v = get("time.T")) c.final_time = parse_real("time.T", *v);
  if (auto v = get("time.dt")) c.dt = parse_real("time.dt", *v);
  if (!(c.final_time > 0.0)) throw ConfigError("time.T: must be positive");
  if (!(c.dt > 0.0)) throw ConfigError("time.dt: must be positive");
  try {
    (void)TimeGrid::from_step(c.final_time, c.dt);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("time.dt: ") + e.what());
  }

  if (auto v = get("physics.schedule")) c.schedule = parse_schedule(*v);
  if (auto v = get("physics.nu")) {
    c.nu = parse_real("physics.nu", *v);
    if (!(c.nu > 0.0)) throw ConfigError("physics.nu: must be positive");
  } else if (c.schedule.empty()) {
    throw ConfigError("physics.nu: required key missing");
  }
  if (!c.schedule.empty()) {
    if (c.problem == ProblemKind::Manufactured) throw ConfigError("physics.schedule: not used by the manufactured case");
    if (get("physics.nu") && c.nu != c.schedule.back()) {
      throw ConfigError("physics.nu: must equal the last entry of physics.schedule");
    }
    c.nu = c.schedule.back();
  }
  if (auto v = get("physics.nu_bar")) c.nu_bar = parse_real("physics.nu_bar", *v);
  if (!(c.nu_bar > 0.0)) throw ConfigError("physics.nu_bar: must be positive");
  if (auto v = get("physics.refinements")) c.refinements = parse_int("physics.refinements", *v);
  if (c.refinements < 1) throw ConfigError("physics.refinements: must be at least 1");

  if (auto v = get("solver.m")) c.m = parse_real("solver.m", *v);
  if (!(c.m >= 1.0)) throw ConfigError("solver.m: must be at least 1");
  if (auto v = get("solver.tol")) c.tol = parse_real("solver.tol", *v);
  if (!(c.tol > 0.0)) throw ConfigError("solver.tol: must be positive");
  if (auto v = get("solver.policy")) c.policy = parse_policy(*v);
  if (auto v = get("solver.variant")) c.variant = parse_variant(*v);
  if (auto v = get("solver.max_iterations")) c.max_iterations = parse_int("solver.max_iterations", *v);
  if (c.max_iterations < 0) throw ConfigError("solver.max_iterations: must be non-negative");

  if (auto v = get("output.directory")) c.output_dir = *v;
  if (c.output_dir.empty()) throw ConfigError("output.directory: empty value");
  if (auto v = get("output.snapshots")) {
    c.snapshots = parse_list("output.snapshots", *v);
    for (double t : c.snapshots) {
      if (t < 0.0 || t > c.final_time) throw ConfigError("output.snapshots: time outside [0, T]");
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Mesh build_mesh(const std::string& geometry, double h) {
  if (geometry == "semidisk") return generate_semidisk(h);
  if (geometry == "unit_square") return generate_unit_square(static_cast<int>(std::ceil(1.0 / h - 1e-9)));
  std::filesystem::path base(geometry);
  if (base.extension() == ".node" || base.extension() == ".ele") base.replace_extension();
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw MeshError("cannot read mesh file " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string node = slurp(std::filesystem::path(base).concat(".node"));
  const std::string ele = slurp(std::filesystem::path(base).concat(".ele"));
  return read_triangle_format(node, ele, default_tag_map());
}

std::array<double, 2> ManufacturedSolution::velocity(const Point2& p, double t) const {
  using std::numbers::pi;
  const double s = std::exp(-t);
  const double sx = std::sin(pi * p.x);
  const double sy = std::sin(pi * p.y);
  return {pi * sx * sx * std::sin(2 * pi * p.y) * s, -pi * std::sin(2 * pi * p.x) * sy * sy * s};
}

std::array<double, 4> ManufacturedSolution::gradient(const Point2& p, double t) const {
  using std::numbers::pi;
  const double s = std::exp(-t);
  const double sx = std::sin(pi * p.x);
  const double sy = std::sin(pi * p.y);
  const double s2x = std::sin(2 * pi * p.x);
  const double s2y = std::sin(2 * pi * p.y);
  const double pi2 = pi * pi;
  return {pi2 * s2x * s2y * s, 2 * pi2 * sx * sx * std::cos(2 * pi * p.y) * s,
          -2 * pi2 * std::cos(2 * pi * p.x) * sy * sy * s, -pi2 * s2x * s2y * s};
}

std::array<double, 2> ManufacturedSolution::forcing(const Point2& p, double t) const {
  using std::numbers::pi;
  const double s = std::exp(-t);
  const double sx = std::sin(pi * p.x);
  const double sy = std::sin(pi * p.y);
  const double pi3 = pi * pi * pi;
  const auto u = velocity(p, t);
  const auto g = gradient(p, t);
  const double lap1 = 2 * pi3 * std::sin(2 * pi * p.y) * s * (1 - 4 * sx * sx);
  const double lap2 = 2 * pi3 * std::sin(2 * pi * p.x) * s * (4 * sy * sy - 1);
  return {-u[0] - nu * lap1 + u[0] * g[0] + u[1] * g[1], -u[1] - nu * lap2 + u[0] * g[2] + u[1] * g[3]};
}

bool RunReport::converged() const {
  if (stages.empty()) return false;
  for (const auto& s : stages) {
    if (s.result.outcome != Outcome::Converged) return false;
  }
  for (const auto& l : refinement) {
    if (!l.converged) return false;
  }
  return true;
}

Outcome RunReport::outcome() const {
  if (converged()) return Outcome::Converged;
  for (const auto& s : stages) {
    if (s.result.outcome == Outcome::Diverged) return Outcome::Diverged;
  }
  return Outcome::IterationCap;
}

double RunReport::final_sqrt2E() const { return stages.empty() ? 0.0 : stages.back().result.final_sqrt2E(); }

int exit_status(const RunReport& report) { return report.converged() ? 0 : 2; }

double fitted_rate(const std::vector<RefinementLevel>& levels) {
  if (levels.size() < 2) throw std::invalid_argument("rate fit needs at least two levels");
  double sx = 0.0;
  double sy = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  const double n = static_cast<double>(levels.size());
  for (const auto& l : levels) {
    const double x = std::log(l.h);
    const double y = std::log(l.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string history_csv(const std::vector<IterationRecord>& history) {
  std::string out = "k,rel_increment,sqrt2E,lambda\n";
  for (const auto& r : history) {
    out += std::to_string(r.k) + "," + format_real(r.rel_increment) + "," + format_real(r.sqrt2E) + "," +
           format_real(r.lambda) + "\n";
  }
  return out;
}

namespace {

SolveOptions solve_options(const ExperimentConfig& c, std::ostream* log, double nu) {
  SolveOptions o;
  o.tol = c.tol;
  o.m = c.m;
  o.policy = c.policy;
  o.functional = c.variant;
  o.max_iterations = c.max_iterations;
  if (log) {
    o.on_iteration = [log, nu](const IterationRecord& r) {
      *log << "nu=" << format_real(nu, "%.6g") << " k=" << r.k << " sqrt2E=" << format_real(r.sqrt2E, "%.4e")
           << " lambda=" << format_real(r.lambda, "%.6f") << " t=" << format_real(r.wall_time, "%.1f") << "s\n"
           << std::flush;
    };
  }
  return o;
}

void write_text(const std::filesystem::path& path, const std::string& text, RunReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
  report.written_files.push_back(path.string());
}

void write_snapshots(const ExperimentConfig& c, const SpaceLayout& layout, const FieldTrajectory& y,
                     RunReport& report) {
  const double dt = y.grid.dt();
  for (double t : c.snapshots) {
    const int n = std::clamp(static_cast<int>(std::lround(t / dt)), 0, y.grid.steps);
    const double snapped = y.grid.time(n);
    const DiscreteField u = DiscreteField::velocity(y.velocity[n]);
    std::vector<NamedField> fields{{"velocity", u}, {"psi", stream_function(layout, u)}};
    char name[64];
    std::snprintf(name, sizeof name, "snapshot_t%.6f.vtk", snapped);
    const auto path = c.output_dir / name;
    write_vtk(layout, fields, path.string());
    report.written_files.push_back(path.string());
  }
}

void record_counts(const SpaceLayout& layout, RunReport& report) {
  report.n_triangles = layout.n_triangles();
  report.n_vertices = static_cast<int>(layout.mesh().n_vertices());
  report.n_velocity_dofs = layout.n_velocity_dofs();
  report.n_pressure_dofs = layout.n_pressure_dofs();
}

void run_cavity(const ExperimentConfig& c, std::ostream* log, RunReport& report) {
  auto disc = std::make_shared<Discretization>(build_mesh(c.geometry, c.h));
  record_counts(disc->layout, report);
  auto ops = std::make_shared<SchemeOperators>(disc, TimeGrid::from_step(c.final_time, c.dt));
  const ProblemSetup setup = cavity_setup(ops, c.nu_bar);

  FieldTrajectory y = initial_guess(setup);
  for (double nu : c.viscosities()) {
    const LeastSquaresNewton solver(ops, nu, setup.forcing);
    SolveResult r = solver.solve(y, solve_options(c, log, nu));
    const bool ok = r.outcome == Outcome::Converged;
    if (ok) y = r.y;
    report.stages.push_back({nu, std::move(r)});
    if (!ok) break;
  }
  write_snapshots(c, disc->layout, report.stages.back().result.y, report);
}

void run_manufactured(const ExperimentConfig& c, std::ostream* log, RunReport& report) {
  const ManufacturedSolution exact{c.nu};
  const int n0 = static_cast<int>(std::ceil(1.0 / c.h - 1e-9));
  for (int level = 0; level < c.refinements; ++level) {
    const int n = n0 << level;
    const double dt = c.dt / std::pow(4.0, level);
    auto disc = std::make_shared<Discretization>(generate_unit_square(n));
    const SpaceLayout& layout = disc->layout;
    const TimeGrid grid = TimeGrid::from_step(c.final_time, dt);
    auto ops = std::make_shared<SchemeOperators>(disc, grid);
    ProblemSetup setup;
    setup.ops = ops;
    setup.boundary_values = Vector::Zero(layout.n_velocity_dofs());
    setup.u0 = interpolate_velocity(layout, [&](const Point2& p) { return exact.velocity(p, 0.0); });
    setup.nu_bar = c.nu_bar;
    for (int k = 0; k < grid.steps; ++k) {
      const double t = grid.time(k + 1);
      setup.forcing.push_back(assemble_load(layout, [&](const Point2& p) { return exact.forcing(p, t); }));
    }
    if (log) *log << "manufactured level n=" << n << " dt=" << format_real(dt, "%.6g") << "\n";
    SolveResult r = damped_newton_solve(setup, c.nu, solve_options(c, log, c.nu));
    double err2 = 0.0;
    for (int k = 1; k <= grid.steps; ++k) {
      const double t = grid.time(k);
      err2 += grid.dt() * h1_seminorm_error_squared(layout, r.y.velocity[k],
                                                    [&](const Point2& p) { return exact.gradient(p, t); });
    }
    RefinementLevel rl;
    rl.n = n;
    rl.h = 1.0 / n;
    rl.dt = dt;
    rl.error = std::sqrt(err2);
    rl.iterations = r.iterations();
    rl.converged = r.outcome == Outcome::Converged;
    report.refinement.push_back(rl);
    if (level + 1 == c.refinements) {
      record_counts(layout, report);
      report.stages.push_back({c.nu, std::move(r)});
      write_snapshots(c, layout, report.stages.back().result.y, report);
    }
  }
  if (report.refinement.size() >= 2) report.convergence_rate = fitted_rate(report.refinement);
}

nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["geometry"] = c.geometry;
  j["h"] = c.h;
  j["T"] = c.final_time;
  j["dt"] = c.dt;
  j["nu"] = c.nu;
  j["nu_bar"] = c.nu_bar;
  j["problem"] = c.problem == ProblemKind::Cavity ? "cavity" : "manufactured";
  if (c.problem == ProblemKind::Manufactured) j["refinements"] = c.refinements;
  j["m"] = c.m;
  j["tol"] = c.tol;
  j["policy"] = to_string(c.policy);
  j["variant"] = to_string(c.variant);
  j["max_iterations"] = c.max_iterations;
  j["schedule"] = c.schedule;
  j["output_dir"] = c.output_dir.string();
  j["snapshots"] = c.snapshots;
  return j;
}

nlohmann::json history_json(const std::vector<IterationRecord>& history) {
  nlohmann::json rows = nlohmann::json::array();
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  for (const auto& r : history) {
    rows.push_back({{"k", r.k},
                    {"rel_increment", num(r.rel_increment)},
                    {"sqrt2E", num(r.sqrt2E)},
                    {"lambda", num(r.lambda)},
                    {"wall_time", r.wall_time}});
  }
  return rows;
}

std::string report_text(const RunReport& r) {
  nlohmann::json j;
  j["config"] = config_json(r.config);
  j["counts"] = {{"triangles", r.n_triangles},
                 {"vertices", r.n_vertices},
                 {"velocity_dofs", r.n_velocity_dofs},
                 {"pressure_dofs", r.n_pressure_dofs}};
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"nu", s.nu},
                      {"outcome", to_string(s.result.outcome)},
                      {"iterations", s.result.iterations()},
                      {"final_sqrt2E", s.result.final_sqrt2E()},
                      {"history", history_json(s.result.history)}});
  }
  j["stages"] = stages;
  if (!r.refinement.empty()) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : r.refinement) {
      levels.push_back({{"n", l.n},
                        {"h", l.h},
                        {"dt", l.dt},
                        {"error_L2V", l.error},
                        {"iterations", l.iterations},
                        {"converged", l.converged}});
    }
    j["refinement"] = levels;
    if (r.convergence_rate) j["convergence_rate"] = *r.convergence_rate;
  }
  j["final_sqrt2E"] = r.final_sqrt2E();
  j["converged"] = r.converged();
  j["outcome"] = to_string(r.outcome());
  j["wall_time"] = r.wall_time;
  return j.dump(2) + "\n";
}

}  // namespace

ProblemSetup cavity_setup(std::shared_ptr<const SchemeOperators> ops, double nu_bar) {
  ProblemSetup setup;
  setup.boundary_values = interpolate_boundary(ops->layout(), BoundaryData::lid_driven(cavity_lid_profile));
  setup.u0 = steady_stokes_initial(ops->laplacian(), setup.boundary_values);
  setup.nu_bar = nu_bar;
  setup.ops = std::move(ops);
  return setup;
}

RunReport run_experiment(const ExperimentConfig& config, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.config = config;
  std::filesystem::create_directories(config.output_dir);
  if (config.problem == ProblemKind::Cavity) {
    run_cavity(config, log, report);
  } else {
    run_manufactured(config, log, report);
  }
  const auto& stages = report.stages;
  write_text(config.output_dir / "history.csv", history_csv(stages.back().result.history), report);
  if (stages.size() > 1) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      write_text(config.output_dir / ("history_stage" + std::to_string(i) + ".csv"),
                 history_csv(stages[i].result.history), report);
    }
  }
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(config.output_dir / "report.txt", report_text(report), report);
  return report;
}

}  // namespace lsqns
