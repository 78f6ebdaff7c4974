#pragma once

#include "flaegis/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace flaegis {

struct SweepCell {
  DefenseKind defense;
  AttackKind attack;
  double fraction;

  /// Sub-directory name, e.g. "flaegis__lie__0.4".
  std::string dir_name() const;
  ExperimentConfig apply(const ExperimentConfig& base) const;
};

/// Cartesian product in (defense, attack, fraction) order.
std::vector<SweepCell> sweep_cells(const SweepGrid& grid);

/// Ablation grid: the three FLAegis variants crossed with the attacks and
/// fractions from `grid`, or with the base config's own attack and fraction
/// when `grid` has none.
SweepGrid ablation_grid(const ExperimentConfig& base, const std::optional<SweepGrid>& grid);

struct SweepOutcome {
  std::size_t ran = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// Runs every cell without a report.json under `out`, up to `jobs` at a time,
/// then writes index.csv listing the completed cells.
SweepOutcome run_sweep(const ExperimentConfig& base, const SweepGrid& grid,
                       const std::filesystem::path& out, int jobs);

inline constexpr const char* index_csv_header =
  "defense,attack,fraction,dir,mean_detection_accuracy,final_accuracy,valid";

struct SummaryRow {
  std::string defense;
  std::string attack;
  double fraction = 0.0;
  std::string dir; // relative to the report root
  std::optional<double> mean_detection_accuracy;
  double final_accuracy = 0.0;
  bool valid = true;
};

/// One row per report.json found under `root`, sorted by (attack, fraction,
/// defense, dir).
std::vector<SummaryRow> collect_reports(const std::filesystem::path& root);

inline constexpr const char* summary_csv_header =
  "defense,attack,fraction,mean_detection_accuracy,final_accuracy,valid,dir";

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void print_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows);

} // namespace flaegis
