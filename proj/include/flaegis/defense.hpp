#pragma once

#include "flaegis/aggregate.hpp"
#include "flaegis/baselines.hpp"
#include "flaegis/core.hpp"
#include "flaegis/detect.hpp"
#include "flaegis/learner.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace flaegis {

enum class DefenseKind {
  fedavg,
  flaegis,
  flaegis_no_sax,
  flaegis_no_fft,
  signguard,
  signguard_fft,
  feddmc,
  feddmc_fft,
  lomar,
  lomar_fft,
  fft_only,
};

std::string to_string(DefenseKind k);
/// Accepts "none" as an alias of fedavg.
DefenseKind defense_kind_from_string(const std::string& s);
const std::vector<DefenseKind>& all_defense_kinds();

/// What the identification phase looks at: the submitted weights, or the
/// weights minus the current global model.
enum class DetectInput { weights, update };
std::string to_string(DetectInput d);
DetectInput detect_input_from_string(const std::string& s);

struct DefenseSettings {
  DetectConfig detect;
  DetectInput detect_input = DetectInput::update;
  FftAggConfig fft;
  SignGuardConfig signguard;
  FedDmcConfig feddmc;
  LoMarConfig lomar;
  bool weighted_fedavg = false;
};

/// Everything the server may consult during a round.
struct RoundInput {
  int round = 0;
  const WeightVector* global = nullptr;
  std::span<const ServerUpdate> updates;
  std::span<const double> sample_counts; // per update, same order
  std::uint64_t seed = 0;
};

class Defense {
public:
  virtual ~Defense() = default;

  virtual DefenseKind kind() const = 0;
  virtual Verdict identify(const RoundInput& in) = 0;
  /// Aggregates the updates at `accepted` positions into the next global model.
  virtual WeightVector aggregate(const RoundInput& in,
                                 std::span<const std::size_t> accepted) = 0;
};

/// Model shape and probe inputs; LoMar evaluates client models on the probe.
struct LearnerContext {
  MlpShape shape;
  Eigen::MatrixXd probe;
};

std::unique_ptr<Defense> make_defense(DefenseKind kind, const DefenseSettings& settings,
                                      const LearnerContext& learner);

} // namespace flaegis
