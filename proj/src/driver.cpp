#include "flaegis/driver.hpp"

#include "flaegis/log.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace flaegis {

namespace {

std::string csv_optional(const std::optional<double>& v)
{
  return v ? format_double(*v) : std::string();
}

} // namespace

std::string SweepCell::dir_name() const
{
  return to_string(defense) + "__" + to_string(attack) + "__" + format_double(fraction);
}

ExperimentConfig SweepCell::apply(const ExperimentConfig& base) const
{
  ExperimentConfig cfg = base;
  cfg.defense = defense;
  cfg.attack.kind = attack;
  cfg.malicious_fraction = fraction;
  if (attack == AttackKind::mimic)
    cfg.attack.omniscient = true;
  return cfg;
}

std::vector<SweepCell> sweep_cells(const SweepGrid& grid)
{
  std::vector<SweepCell> cells;
  cells.reserve(grid.cells());
  for (auto d : grid.defenses)
    for (auto a : grid.attacks)
      for (double f : grid.fractions)
        cells.push_back({ d, a, f });
  return cells;
}

SweepGrid ablation_grid(const ExperimentConfig& base, const std::optional<SweepGrid>& grid)
{
  SweepGrid g;
  g.defenses = { DefenseKind::flaegis, DefenseKind::flaegis_no_sax, DefenseKind::flaegis_no_fft };
  if (grid && !grid->attacks.empty())
    g.attacks = grid->attacks;
  else
    g.attacks = { base.attack.kind };
  if (grid && !grid->fractions.empty())
    g.fractions = grid->fractions;
  else
    g.fractions = { base.malicious_fraction };
  return g;
}

SweepOutcome run_sweep(const ExperimentConfig& base, const SweepGrid& grid, const fs::path& out,
                       int jobs)
{
  if (grid.empty())
    throw ConfigError("grid", "sweep grid is empty");
  const auto cells = sweep_cells(grid);
  // Validate every cell before running any of them.
  for (const auto& c : cells) {
    try {
      c.apply(base).validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("grid", c.dir_name() + ": " + e.what());
    }
  }
  fs::create_directories(out);

  SweepOutcome outcome;
  std::mutex mu;
  std::atomic<std::size_t> next{ 0 };
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto& cell = cells[i];
      const auto dir = out / cell.dir_name();
      if (fs::exists(dir / "report.json")) {
        std::lock_guard lock(mu);
        ++outcome.skipped;
        log(LogLevel::info, "skip " + cell.dir_name() + " (report exists)");
        continue;
      }
      log(LogLevel::info, "run " + cell.dir_name());
      try {
        const auto report = run_experiment(cell.apply(base));
        write_report_files(dir, report);
        std::lock_guard lock(mu);
        ++outcome.ran;
        if (!report.valid)
          ++outcome.failed;
      } catch (const std::exception& e) {
        log(LogLevel::error, cell.dir_name() + ": " + e.what());
        std::lock_guard lock(mu);
        ++outcome.failed;
      }
    }
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)),
                                               cells.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w)
      pool.emplace_back(worker);
    for (auto& t : pool)
      t.join();
  }

  std::ofstream index(out / "index.csv");
  index << index_csv_header << '\n';
  for (const auto& cell : cells) {
    const auto path = out / cell.dir_name() / "report.json";
    if (!fs::exists(path))
      continue;
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in);
    std::optional<double> det;
    if (!j.at("mean_detection_accuracy").is_null())
      det = j.at("mean_detection_accuracy").get<double>();
    index << to_string(cell.defense) << ',' << to_string(cell.attack) << ','
          << format_double(cell.fraction) << ',' << cell.dir_name() << ',' << csv_optional(det)
          << ',' << format_double(j.at("final_accuracy").get<double>()) << ','
          << (j.at("valid").get<bool>() ? "true" : "false") << '\n';
  }
  if (!index)
    throw std::runtime_error("cannot write " + (out / "index.csv").string());
  return outcome;
}

std::vector<SummaryRow> collect_reports(const fs::path& root)
{
  std::vector<SummaryRow> rows;
  if (!fs::is_directory(root))
    return rows;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().filename() != "report.json")
      continue;
    std::ifstream in(entry.path());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      SummaryRow row;
      const auto& cfg = j.at("config");
      row.defense = cfg.at("defense").get<std::string>();
      row.attack = cfg.at("attack").at("kind").get<std::string>();
      row.fraction = cfg.at("malicious_fraction").get<double>();
      row.dir = fs::relative(entry.path().parent_path(), root).generic_string();
      if (!j.at("mean_detection_accuracy").is_null())
        row.mean_detection_accuracy = j.at("mean_detection_accuracy").get<double>();
      row.final_accuracy = j.at("final_accuracy").get<double>();
      row.valid = j.at("valid").get<bool>();
      rows.push_back(std::move(row));
    } catch (const nlohmann::json::exception& e) {
      log(LogLevel::error, "ignoring " + entry.path().string() + ": " + e.what());
    }
  }
  std::sort(rows.begin(), rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
    return std::tie(a.attack, a.fraction, a.defense, a.dir) <
           std::tie(b.attack, b.fraction, b.defense, b.dir);
  });
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows)
{
  out << summary_csv_header << '\n';
  for (const auto& r : rows) {
    out << r.defense << ',' << r.attack << ',' << format_double(r.fraction) << ','
        << csv_optional(r.mean_detection_accuracy) << ',' << format_double(r.final_accuracy)
        << ',' << (r.valid ? "true" : "false") << ',' << r.dir << '\n';
  }
}

void print_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows)
{
  const auto fixed4 = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
  };
  out << std::left << std::setw(16) << "defense" << std::setw(12) << "attack" << std::setw(10)
      << "fraction" << std::setw(12) << "detection" << std::setw(12) << "accuracy" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(16) << r.defense << std::setw(12) << r.attack
        << std::setw(10) << format_double(r.fraction) << std::setw(12)
        << (r.mean_detection_accuracy ? fixed4(*r.mean_detection_accuracy) : "-")
        << std::setw(12) << fixed4(r.final_accuracy) << (r.valid ? "" : "  (invalid)") << '\n';
  }
}

} // namespace flaegis
