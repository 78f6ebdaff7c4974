#pragma once

#include "flaegis/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace flaegis {

/// Invalid configuration. `field` is the dotted path of the offending key,
/// empty for document-level errors (e.g. JSON syntax).
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field.empty() ? message : field + ": " + message)
    , field_(std::move(field))
  {
  }
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Axes of a sweep: every combination becomes one run.
struct SweepGrid {
  std::vector<DefenseKind> defenses;
  std::vector<AttackKind> attacks;
  std::vector<double> fractions;

  bool empty() const { return defenses.empty() || attacks.empty() || fractions.empty(); }
  std::size_t cells() const { return defenses.size() * attacks.size() * fractions.size(); }
};

struct ConfigDocument {
  ExperimentConfig experiment;
  std::optional<SweepGrid> grid;
};

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const SweepGrid& grid);
SweepGrid grid_from_json(const nlohmann::json& j);

ConfigDocument parse_config(const std::string& text);
ConfigDocument load_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const RoundReport& r, bool include_timing);
nlohmann::ordered_json to_json(const ExperimentReport& r);

inline constexpr const char* rounds_csv_header =
  "round,defense,attack,fraction,detection_accuracy,model_accuracy,n_flagged,"
  "n_true_malicious,wall_ms";

void write_rounds_csv(std::ostream& out, const ExperimentReport& r);

/// Writes report.json and rounds.csv into `dir` (created if needed).
void write_report_files(const std::filesystem::path& dir, const ExperimentReport& r);

/// Shortest round-trip decimal form.
std::string format_double(double x);

} // namespace flaegis
