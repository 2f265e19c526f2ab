#include <iostream>

#include <CLI11.hpp>

#include "experiment/run.hpp"

int main(int argc, char** argv) {
  namespace ex = fwlab::experiment;
  CLI::App app{"fwlab: Freidlin-Wentzell rate functions and fluctuation-theorem experiments"};
  app.require_subcommand(1);

  std::string config;
  ex::RunOverrides overrides;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;
  auto* run = app.add_subcommand("run", "Run the task of a config file (a manifest.json replays its run)");
  run->add_option("config", config, "Config file (JSON)")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the master seed");
  auto* out_opt = run->add_option("--out", out_dir, "Override the output directory");
  auto* threads_opt = run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::vector<std::string> dirs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Summary tables from artifact directories");
  report->add_option("dirs", dirs, "Artifact directories")->required();
  auto* report_out_opt = report->add_option("--out", report_out, "Write the tables here instead of stdout");

  auto* check = app.add_subcommand("check-model", "Assumption diagnostics for the config's model");
  check->add_option("config", config, "Config file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : ex::kExitInvalid;
  }

  if (*run) {
    if (*seed_opt) overrides.seed = seed;
    if (*out_opt) overrides.output = out_dir;
    if (*threads_opt) overrides.threads = threads;
    return ex::run(config, overrides, std::cout, std::cerr);
  }
  if (*report) {
    std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
    std::optional<std::filesystem::path> dest;
    if (*report_out_opt) dest = report_out;
    return ex::report(paths, dest, std::cout, std::cerr);
  }
  return ex::check_model(config, std::cout, std::cerr);
}
