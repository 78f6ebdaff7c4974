// Experiment driver: run, sweep, ablate, report.

#include "flaegis/driver.hpp"
#include "flaegis/log.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace flaegis;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_config = 2;

int cmd_run(const fs::path& config, std::optional<std::uint64_t> seed, const fs::path& out)
{
  auto doc = load_config(config);
  if (seed)
    doc.experiment.seed = *seed;
  const auto report = run_experiment(doc.experiment);
  write_report_files(out, report);
  if (!report.valid) {
    std::cerr << "flaegis: experiment aborted: " << report.error << '\n';
    return exit_failure;
  }
  std::cout << "final accuracy " << format_double(report.final_accuracy);
  if (report.mean_detection_accuracy)
    std::cout << ", mean detection " << format_double(*report.mean_detection_accuracy);
  std::cout << '\n';
  return exit_ok;
}

int finish_sweep(const SweepOutcome& o)
{
  std::cout << "cells run " << o.ran << ", skipped " << o.skipped << ", failed " << o.failed
            << '\n';
  return o.failed == 0 ? exit_ok : exit_failure;
}

int cmd_sweep(const fs::path& config, const fs::path& out, int jobs)
{
  const auto doc = load_config(config);
  if (!doc.grid || doc.grid->empty())
    throw ConfigError("grid", "sweep needs non-empty grid.defenses, grid.attacks and grid.fractions");
  return finish_sweep(run_sweep(doc.experiment, *doc.grid, out, jobs));
}

int cmd_ablate(const fs::path& config, const fs::path& out, int jobs)
{
  const auto doc = load_config(config);
  return finish_sweep(run_sweep(doc.experiment, ablation_grid(doc.experiment, doc.grid), out, jobs));
}

int cmd_report(const fs::path& out)
{
  const auto rows = collect_reports(out);
  if (rows.empty()) {
    std::cerr << "flaegis: no report.json found under " << out << '\n';
    return exit_failure;
  }
  print_summary_table(std::cout, rows);
  std::ofstream csv(out / "summary.csv");
  write_summary_csv(csv, rows);
  if (!csv) {
    std::cerr << "flaegis: cannot write " << (out / "summary.csv") << '\n';
    return exit_failure;
  }
  return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "FLAegis federated-learning poisoning lab" };
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--out", out, "Output directory")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Run a defense x attack x fraction grid");
  sweep->add_option("--config", config, "Config with a grid section")->required();
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Cells run concurrently")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "Run flaegis, flaegis_no_sax and flaegis_no_fft");
  ablate->add_option("--config", config, "Experiment config")->required();
  ablate->add_option("--out", out, "Output directory")->required();
  ablate->add_option("--jobs", jobs, "Cells run concurrently")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Summarize stored reports");
  report->add_option("--out", out, "Directory holding reports")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }

  try {
    if (*run)
      return cmd_run(config, seed, out);
    if (*sweep)
      return cmd_sweep(config, out, jobs);
    if (*ablate)
      return cmd_ablate(config, out, jobs);
    return cmd_report(out);
  } catch (const ConfigError& e) {
    std::cerr << "flaegis: invalid config: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "flaegis: " << e.what() << '\n';
    return exit_failure;
  }
}
