#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "hdsa/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hyper-differential sensitivity analysis of PDE-constrained optimization problems"};
  app.require_subcommand(1);

  std::string run_config;
  bool force = false;
  int workers = 0;
  auto* run = app.add_subcommand("run", "Run the sampled analysis and write a result bundle");
  run->add_option("config", run_config, "JSON configuration file")->required();
  run->add_flag("--force", force, "Replace an existing bundle in the output directory");
  run->add_option("--workers", workers, "Worker threads (default: available parallelism)")->check(CLI::PositiveNumber);

  std::string verify_config;
  auto* verify = app.add_subcommand("verify", "Run derivative, adjoint, oracle and perturbation checks");
  verify->add_option("config", verify_config, "JSON configuration file")->required();

  std::string bundle_dir;
  auto* report = app.add_subcommand("report", "Render tables from a result bundle");
  report->add_option("bundle", bundle_dir, "Bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hdsa::cli::kExitUsage;
  }

  if (run->parsed()) return hdsa::cli::cmd_run(run_config, force, workers, std::cout, std::cerr);
  if (verify->parsed()) return hdsa::cli::cmd_verify(verify_config, std::cout, std::cerr);
  return hdsa::cli::cmd_report(bundle_dir, std::cout, std::cerr);
}
