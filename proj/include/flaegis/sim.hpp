#pragma once

#include "flaegis/attacks.hpp"
#include "flaegis/core.hpp"
#include "flaegis/defense.hpp"
#include "flaegis/learner.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace flaegis {

struct DataConfig {
  std::size_t samples = 4000;
  std::size_t dim = 8;
  int classes = 5;
  double cluster_spread = 1.0;
  double center_scale = 10.0;
  double dirichlet_alpha = 0.5;
  double test_fraction = 0.2;
  std::string csv_path; // empty: synthesize
};

/// The evaluated model family; the desk-scale run always uses the MLP below.
inline constexpr const char* paper_architecture =
  "CNN: conv 8x8 (8 ch), conv 8x8 (16 ch), conv 8x8 (24 ch), FC 128, ReLU; "
  "softmax over 62 classes; Adam lr 0.001, batch 64";

struct LearnerConfig {
  std::vector<std::size_t> hidden{ 16 };
  TrainConfig train;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int clients = 20;
  int rounds = 15;
  double malicious_fraction = 0.0;
  bool resample_malicious = true;
  int warmup = 3;
  int threads = 1;
  bool include_timing = false;
  DefenseKind defense = DefenseKind::flaegis;
  AttackConfig attack;
  DataConfig data;
  LearnerConfig learner;
  DefenseSettings defense_settings;

  void validate() const;
  int malicious_count() const;
};

struct PhaseTimes {
  double train_ms = 0.0;
  double detect_ms = 0.0;
  double aggregate_ms = 0.0;
  double evaluate_ms = 0.0;

  double total() const { return train_ms + detect_ms + aggregate_ms + evaluate_ms; }
};

struct RoundReport {
  int round = 0;
  double detection_accuracy = 0.0;
  double model_accuracy = 0.0;
  int estimated_clusters = 1;
  std::vector<int> flagged_ids;
  std::vector<int> true_malicious_ids;
  bool all_flagged_fallback = false;
  PhaseTimes times;
};

struct ExperimentReport {
  ExperimentConfig config;
  double initial_accuracy = 0.0;
  std::vector<RoundReport> rounds;
  double final_accuracy = 0.0;
  std::optional<double> mean_detection_accuracy;
  bool valid = true;
  std::string error;
};

/// (TP + TN) / K over the round's participants.
double detection_accuracy(std::span<const int> participants, std::span<const int> flagged,
                          std::span<const int> truly_malicious);

/// Owns the federation for one experiment: data, clients, defense state and
/// the current global model.
class Simulation {
public:
  explicit Simulation(ExperimentConfig cfg);
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const WeightVector& global() const noexcept { return global_; }
  const Dataset& test_set() const noexcept { return test_; }
  const std::vector<Dataset>& client_data() const noexcept { return clients_; }
  double current_accuracy() const;

  /// Malicious ids for a round (sorted).
  std::vector<int> malicious_ids(int round) const;

  /// Honest and poisoned client submissions for a round, before the server.
  std::vector<ClientUpdate> client_updates(int round, std::span<const int> malicious) const;

  /// One full FL round; advances the global model.
  RoundReport run_round(int round);

  ExperimentReport run();

private:
  ExperimentConfig cfg_;
  Dataset test_;
  std::vector<Dataset> clients_;
  LearnerContext learner_;
  std::unique_ptr<Defense> defense_;
  WeightVector global_;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

struct AblationCell {
  DefenseKind defense;
  AttackKind attack;
  double fraction;
  ExperimentReport report;
};

/// {flaegis, flaegis_no_sax, flaegis_no_fft} x attacks x fractions, one
/// shared master seed.
std::vector<AblationCell> ablation_suite(const ExperimentConfig& base,
                                         std::span<const AttackKind> attacks,
                                         std::span<const double> fractions);

} // namespace flaegis
