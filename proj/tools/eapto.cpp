// Command-line front end: run an optimization, run the self-check battery, or
// write the analysis mesh.

#include "eapto/driver.hpp"
#include "eapto/parallel.hpp"
#include "eapto/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

constexpr int exit_converged = 0;
constexpr int exit_error = 1;
constexpr int exit_iteration_cap = 2;

struct Overrides {
  std::optional<std::string> out_dir;
  std::optional<int> max_iters;
  std::optional<int> checkpoint_every;

  void apply(eapto::ProblemConfig& c) const {
    if (out_dir) c.out_dir = *out_dir;
    if (max_iters) c.max_iterations = *max_iters;
    if (checkpoint_every) c.checkpoint_every = *checkpoint_every;
    c.validate();
  }
};

int cmd_run(const std::string& path, const Overrides& ov) {
  eapto::ProblemConfig cfg = eapto::load_config(path);
  ov.apply(cfg);
  eapto::Driver driver(cfg);
  std::printf("%6s %14s %12s %10s %10s %8s %6s %8s %6s\n", "iter", "g0[mm]", "g0_bar", "g1", "g2", "beta", "alpha",
              "a_d", "newton");
  driver.on_iteration([](const eapto::IterationRecord& r) {
    std::printf("%6d %14.6e %12.5e %10.3e %10.3e %8.3f %6.2f %8.3f %6d\n", r.iteration, r.g0, r.g0_bar, r.g1, r.g2,
                r.beta, r.alpha, r.a_d, r.newton_iters);
    std::fflush(stdout);
  });
  const eapto::RunResult res = driver.run();
  const bool converged = res.status == eapto::RunStatus::Converged;
  std::printf("%s after %d iterations: g0 = %.6e mm, g1 = %.3e, g2 = %.3e, far-field |phi| = %.3g V (%.1fs)\n",
              converged ? "converged" : "stopped at iteration cap", res.iterations, res.final.objective.g0,
              res.final.volumes.g1, res.final.volumes.g2, res.far_field_potential, res.wall_time);
  if (!cfg.out_dir.empty()) std::printf("outputs in %s\n", cfg.out_dir.c_str());
  return converged ? exit_converged : exit_iteration_cap;
}

int cmd_verify() {
  bool all = true;
  for (const auto& r : eapto::verify::run_battery()) {
    std::printf("%s %d %-40s %s [%.2fs]\n", r.passed ? "PASS" : "FAIL", r.criterion, r.name.c_str(), r.detail.c_str(),
                r.seconds);
    all = all && r.passed;
  }
  return all ? exit_converged : exit_error;
}

int cmd_export_mesh(const std::optional<std::string>& path, const Overrides& ov) {
  eapto::ProblemConfig cfg = path ? eapto::load_config(*path) : eapto::ProblemConfig{};
  ov.apply(cfg);
  const std::filesystem::path dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
  std::filesystem::create_directories(dir);
  const auto file = dir / "mesh.vtk";
  eapto::export_mesh(cfg, file);
  std::printf("wrote %s\n", file.string().c_str());
  return exit_converged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-material topology optimization of electro-active polymer actuators"};
  app.require_subcommand(1);
  Overrides ov;
  int threads = 1;
  app.add_option("--out-dir", ov.out_dir, "output directory (overrides the config)");
  app.add_option("--max-iters", ov.max_iters, "design iteration cap")->check(CLI::PositiveNumber);
  app.add_option("--checkpoint-every", ov.checkpoint_every, "checkpoint period in iterations, 0 disables")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--threads", threads, "worker threads for assembly")->check(CLI::PositiveNumber);

  std::string config;
  auto* run = app.add_subcommand("run", "optimize the actuator described by a JSON config");
  run->add_option("config", config, "config file")->required();
  run->fallthrough();
  auto* verify = app.add_subcommand("verify", "run the oracle self-check battery");
  verify->fallthrough();
  std::optional<std::string> mesh_config;
  auto* mesh = app.add_subcommand("export-mesh", "write the analysis mesh as mesh.vtk");
  mesh->add_option("config", mesh_config, "config file (defaults when omitted)");
  mesh->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_error;
  }

  try {
    eapto::set_threads(threads);
    if (*run) return cmd_run(config, ov);
    if (*verify) return cmd_verify();
    if (*mesh) return cmd_export_mesh(mesh_config, ov);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_error;
  }
  return exit_error;
}
