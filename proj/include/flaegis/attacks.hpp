#pragma once

#include "flaegis/core.hpp"
#include "flaegis/learner.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace flaegis {

enum class AttackKind { none, label_flip, lie, statopt, mimic, min_max, min_sum };
enum class ThetaMode { inverse_unit_mean, inverse_sign, inverse_std };
enum class ReferenceSet { malicious, benign };
/// `literal` submits -gamma * omega; `offset` submits mean + gamma * omega.
enum class StatOptMode { literal, offset };

struct AttackConfig {
  AttackKind kind = AttackKind::none;
  double gamma_max = 50.0;
  double gamma = 1.0;
  ThetaMode theta_mode = ThetaMode::inverse_unit_mean;
  ReferenceSet reference_set = ReferenceSet::malicious;
  bool omniscient = false;
  StatOptMode statopt_mode = StatOptMode::literal;
  int bisection_steps = 30;

  void validate() const;
  /// True for attacks that transform trained weights (everything but
  /// label flipping and none).
  bool is_model_poisoning() const;
  bool reads_benign_updates() const;
};

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);
std::string to_string(ThetaMode m);
ThetaMode theta_mode_from_string(const std::string& s);
std::string to_string(ReferenceSet r);
ReferenceSet reference_set_from_string(const std::string& s);
std::string to_string(StatOptMode m);
StatOptMode statopt_mode_from_string(const std::string& s);

/// Coordinate-wise statistics over the colluders' honest weights.
struct MaliciousStats {
  WeightVector mean;
  WeightVector stddev; // population standard deviation
};

/// Seeded uniformly random permutation of [0, classes) with no fixed point.
std::vector<int> flip_permutation(int classes, std::uint64_t seed);
Dataset flip_labels(const Dataset& ds, std::uint64_t seed);

MaliciousStats malicious_stats(std::span<const WeightVector> colluders);

/// Normal-quantile coefficient with s = floor(K/2 + 1) - m supporters.
double lie_z(int n_total, int n_malicious);
WeightVector lie_attack(const MaliciousStats& stats, double z);

WeightVector statopt_attack(const MaliciousStats& stats, double gamma,
                            StatOptMode mode = StatOptMode::literal);

/// Returns the benign update with the largest variance across its entries.
/// Ties go to the lowest client id.
WeightVector mimic_attack(std::span<const ServerUpdate> benign, bool omniscient);

/// Perturbation direction theta. A zero mean under inverse_unit_mean falls
/// back to inverse_sign.
WeightVector perturbation_direction(const MaliciousStats& stats, ThetaMode mode);

/// max_r ||candidate - r|| <= max_{i,j} ||r_i - r_j||
bool minmax_feasible(std::span<const double> candidate,
                     std::span<const WeightVector> reference);
/// sum_r ||candidate - r||^2 <= max_i sum_j ||r_i - r_j||^2
bool minsum_feasible(std::span<const double> candidate,
                     std::span<const WeightVector> reference);

struct ScaledPerturbation {
  double gamma = 0.0;
  WeightVector update;
};

ScaledPerturbation minmax_attack(const MaliciousStats& stats,
                                 std::span<const WeightVector> reference,
                                 ThetaMode theta_mode, double gamma_max,
                                 int bisection_steps = 30);
ScaledPerturbation minsum_attack(const MaliciousStats& stats,
                                 std::span<const WeightVector> reference,
                                 ThetaMode theta_mode, double gamma_max,
                                 int bisection_steps = 30);

/// The single vector every colluder submits this round. `colluders` are the
/// colluders' honest weights; `benign` is only read when the config is
/// omniscient and the attack needs it.
WeightVector craft_malicious_update(const AttackConfig& cfg,
                                    std::span<const WeightVector> colluders,
                                    std::span<const ServerUpdate> benign,
                                    int n_total);

} // namespace flaegis
