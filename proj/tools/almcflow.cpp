// almcflow run <config> [--scale f] [--jobs J] [--out dir]
// almcflow table <dir>
//
// Exit codes: 0 success, 1 config error, 2 some seed/method runs failed.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "almcflow/experiment.hpp"
#include "almcflow/io.hpp"

namespace fs = std::filesystem;
using namespace almcflow;

int main(int argc, char** argv) {
  CLI::App app{"Annealed Langevin particles + probability-flow ODE sampler"};
  app.require_subcommand(1);

  std::string config_path;
  double scale = 1.0;
  std::size_t jobs = 1;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "run an experiment config (or a preset name)");
  run->add_option("config", config_path, "config file, or one of gmm2d | gmm100d | allen_cahn")
      ->required();
  run->add_option("--scale", scale, "multiply n, N and K by f")->check(CLI::PositiveNumber);
  run->add_option("--jobs", jobs, "seeds run concurrently")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory (default: runs/<name>)");

  std::string table_dir;
  auto* table = app.add_subcommand("table", "aggregate metric reports under a directory");
  table->add_option("dir", table_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  configure_threads_from_env();

  if (*table) {
    try {
      const auto reports = load_reports(table_dir);
      const auto t = summarize(reports);
      write_text(fs::path(table_dir) / "summary.csv", t.csv);
      write_text(fs::path(table_dir) / "summary.txt", t.text);
      std::cout << t.text;
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }

  ExperimentConfig cfg;
  try {
    const auto presets = preset_names();
    if (!fs::exists(config_path) &&
        std::find(presets.begin(), presets.end(), config_path) != presets.end())
      cfg = preset_config(config_path);
    else
      cfg = config_from_file(ConfigFile::load(config_path));
    if (scale != 1.0) cfg = apply_scale(cfg, scale);
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  const fs::path out = out_dir.empty() ? fs::path("runs") / cfg.name : fs::path(out_dir);
  ExperimentOutcome outcome;
  try {
    outcome = run_experiment(cfg, out, jobs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  std::cout << summarize(outcome.reports).text;
  for (const auto& f : outcome.failures)
    std::cerr << "seed " << f.seed << " " << f.method << " failed: " << f.error << '\n';
  std::cout << "outputs in " << out.string() << '\n';
  return outcome.failures.empty() ? 0 : 2;
}
