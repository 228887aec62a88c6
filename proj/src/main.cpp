#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "istab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Partial-data frequency-sweep experiment driver"};
  app.require_subcommand(1);

  std::string config_path;
  std::string cache_dir;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool seed_set = false;

  app.add_option("--config", config_path, "Experiment config file")
      ->required();
  app.add_option("--jobs", jobs, "Worker threads for DN assembly");
  app.add_option("--cache", cache_dir, "Cache directory (overrides config)");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides config)");

  const struct {
    const char* name;
    const char* help;
    int (*fn)(const istab::ExperimentConfig&, std::ostream&);
  } commands[] = {
      {"forward", "Solve one boundary value problem", istab::cmd_forward},
      {"dnmap", "Build boundary response operators", istab::cmd_dnmap},
      {"cgo-check", "Exponential-solution residual check", istab::cmd_cgo_check},
      {"carleman-check", "Weighted-energy inequality check",
       istab::cmd_carleman_check},
      {"fourier-recon", "Low-frequency mode reconstruction",
       istab::cmd_fourier_recon},
      {"sweep", "Frequency sweep with caching", istab::cmd_sweep},
      {"verify", "Full property suite with margins", istab::cmd_verify},
      {"report", "Summarize sweep outputs", istab::cmd_report},
  };
  for (const auto& command : commands)
    app.add_subcommand(command.name, command.help)->fallthrough();

  CLI11_PARSE(app, argc, argv);
  seed_set = seed_opt->count() > 0;

  try {
    istab::ExperimentConfig cfg = istab::load_config(config_path);
    if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
    if (seed_set) cfg.seed = seed;
    if (jobs > 0) cfg.jobs = jobs;

    for (const auto& command : commands)
      if (app.got_subcommand(command.name))
        return command.fn(cfg, std::cout);
    return istab::kExitFailure;
  } catch (const std::exception& e) {
    std::cout << "ERROR " << e.what() << std::endl;
    return istab::kExitFailure;
  }
}
