// Batch front-end: `run` solves experiment configs, `mesh` writes Triangle files.

#include "lsqns/experiment.hpp"

#include "CLI11.hpp"

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace {

struct RunArgs {
  std::vector<std::string> configs;
  std::string policy;
  std::string variant;
  std::string schedule;
  std::string output;
  bool parallel = false;
};

/// Applies command-line overrides on top of a parsed config.
lsqns::ExperimentConfig effective_config(const std::string& path, const RunArgs& args) {
  lsqns::ExperimentConfig c = lsqns::load_config(path);
  if (!args.policy.empty()) c.policy = lsqns::parse_policy(args.policy);
  if (!args.variant.empty()) c.variant = lsqns::parse_variant(args.variant);
  if (!args.schedule.empty()) {
    if (c.problem == lsqns::ProblemKind::Manufactured) {
      throw lsqns::ConfigError("physics.schedule: not used by the manufactured case");
    }
    c.schedule = lsqns::parse_schedule(args.schedule);
    c.nu = c.schedule.back();
  }
  if (!args.output.empty()) c.output_dir = args.output;
  return c;
}

int run_one(const lsqns::ExperimentConfig& c, const std::string& label, std::mutex& io) {
  struct LockedLog : std::stringbuf {
    LockedLog(std::mutex& m, std::string prefix) : m(m), prefix(std::move(prefix)) {}
    int sync() override {
      std::lock_guard lock(m);
      std::cerr << prefix << str();
      str("");
      return 0;
    }
    std::mutex& m;
    std::string prefix;
  } buf(io, label.empty() ? "" : "[" + label + "] ");
  std::ostream log(&buf);
  const lsqns::RunReport report = lsqns::run_experiment(c, &log);
  std::lock_guard lock(io);
  std::cout << (label.empty() ? "" : label + ": ") << lsqns::to_string(report.outcome())
            << " after " << report.stages.back().result.iterations() << " iterations, sqrt2E = "
            << report.final_sqrt2E();
  if (report.convergence_rate) std::cout << ", rate = " << *report.convergence_rate;
  std::cout << ", output in " << c.output_dir.string() << "\n";
  return lsqns::exit_status(report);
}

int run_command(const RunArgs& args) {
  std::vector<lsqns::ExperimentConfig> configs;
  for (const auto& path : args.configs) configs.push_back(effective_config(path, args));
  if (configs.size() > 1 && !args.output.empty()) {
    throw lsqns::ConfigError("--out: cannot be shared by several configs");
  }
  std::set<std::filesystem::path> dirs;
  for (const auto& c : configs) {
    if (!dirs.insert(std::filesystem::weakly_canonical(c.output_dir)).second) {
      throw lsqns::ConfigError("output.directory: configs must use distinct output directories");
    }
  }
  std::mutex io;
  if (configs.size() == 1) return run_one(configs[0], "", io);

  std::vector<int> status(configs.size(), 1);
  auto job = [&](std::size_t i) {
    try {
      status[i] = run_one(configs[i], args.configs[i], io);
    } catch (const std::exception& e) {
      std::lock_guard lock(io);
      std::cerr << args.configs[i] << ": error: " << e.what() << "\n";
      status[i] = 1;
    }
  };
  if (args.parallel) {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < configs.size(); ++i) threads.emplace_back(job, i);
  } else {
    for (std::size_t i = 0; i < configs.size(); ++i) job(i);
  }
  int worst = 0;
  for (int s : status) {
    if (s == 1) return 1;
    worst = std::max(worst, s);
  }
  return worst;
}

int mesh_command(const std::string& geometry, double h, const std::string& out) {
  const lsqns::Mesh mesh = lsqns::build_mesh(geometry, h);
  std::filesystem::create_directories(out);
  const std::string stem = std::filesystem::path(geometry).stem().string();
  const lsqns::TriangleFiles files = lsqns::write_triangle_format(mesh);
  for (const auto& [ext, text] : {std::pair{".node", &files.node}, std::pair{".ele", &files.ele}}) {
    const auto path = std::filesystem::path(out) / (stem + ext);
    std::ofstream f(path, std::ios::binary);
    f << *text;
    if (!f) throw std::runtime_error("cannot write " + path.string());
  }
  std::cout << mesh.n_triangles() << " triangles, " << mesh.n_vertices() << " vertices, h = " << mesh.max_edge_length()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Least-squares damped Newton solver for 2D unsteady Navier-Stokes"};
  app.require_subcommand(1);
  // "--h" is taken by the mesh size, so help is long-form only.
  app.set_help_flag("--help", "Print this help message and exit");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one or more experiment configs");
  run_cmd->add_option("config", run.configs, "INI config file(s)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--policy", run.policy, "Step policy")->check(CLI::IsMember({"quartic", "cheap", "fixed1"}));
  run_cmd->add_option("--variant", run.variant, "Functional")->check(CLI::IsMember({"E", "Etilde"}));
  run_cmd->add_option("--schedule", run.schedule, "Continuation viscosities, e.g. \"1/500, 1/1000\"");
  run_cmd->add_option("--out", run.output, "Output directory (single config only)");
  run_cmd->add_flag("--parallel", run.parallel, "Run several configs on separate threads");

  std::string geometry;
  double h = 0.05;
  std::string out = ".";
  auto* mesh_cmd = app.add_subcommand("mesh", "Generate a mesh and write .node/.ele files");
  mesh_cmd->add_option("geometry", geometry, "semidisk or unit_square")
      ->required()
      ->check(CLI::IsMember({"semidisk", "unit_square"}));
  mesh_cmd->add_option("--h", h, "Target mesh size")->required()->check(CLI::PositiveNumber);
  mesh_cmd->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) return run_command(run);
    return mesh_command(geometry, h, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
