#pragma once

#include "flaegis/core.hpp"
#include "flaegis/learner.hpp"

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace flaegis {

// SignGuard ---------------------------------------------------------------

struct SignGuardConfig {
  double lower = 0.1;
  double upper = 3.0;
  double meanshift_bandwidth = 0.1;

  void validate() const;
};

double median_norm(std::span<const WeightVector> grads);

/// Positions k with L <= ||g_k|| / median <= R. A zero median keeps only
/// zero-norm gradients.
std::vector<std::size_t> signguard_norm_filter(std::span<const WeightVector> grads,
                                               const SignGuardConfig& cfg);

/// (positive, negative, zero) coordinate fractions.
Eigen::Vector3d sign_features(const WeightVector& g);

struct MeanShiftResult {
  std::vector<int> labels;        // cluster per point
  std::vector<Eigen::VectorXd> centers;
};
/// Flat-kernel mean shift; modes closer than the bandwidth are merged.
MeanShiftResult mean_shift(const std::vector<Eigen::VectorXd>& points, double bandwidth,
                           int max_iter = 300);

/// Positions outside the smallest mean-shift cluster of the sign features.
std::vector<std::size_t> signguard_sign_filter(std::span<const WeightVector> grads,
                                               const SignGuardConfig& cfg);

/// Mean over `accepted` of g * min(1, median / ||g||).
WeightVector signguard_aggregate(std::span<const WeightVector> grads,
                                 std::span<const std::size_t> accepted, double median);
WeightVector signguard_aggregate(std::span<const WeightVector> grads,
                                 std::span<const std::size_t> accepted);

// FedDMC ------------------------------------------------------------------

struct FedDmcConfig {
  int pca_dims = 3;
  double min_leaf_fraction = 0.3;
  double alpha = 0.5;

  void validate() const;
};

/// Centered projection on the top-d principal directions. Directions are
/// sign-normalized so their largest-magnitude component is positive;
/// components beyond the data rank are zero.
Eigen::MatrixXd feddmc_project(std::span<const WeightVector> weights, int dims);

struct HacNode {
  int left = -1;  // child node index, -1 for leaves
  int right = -1;
  std::vector<std::size_t> leaves;
};
/// Average-linkage agglomerative tree over Euclidean distances. Leaves are
/// nodes [0, n); the root is the last node.
std::vector<HacNode> hac_average_linkage(const Eigen::MatrixXd& points);

/// Outlier traversal from the root; returns s_i in {0, 1}.
std::vector<int> feddmc_tree_detect(const Eigen::MatrixXd& projected,
                                    double min_leaf_fraction);

/// Per-client self-ensemble scores carried across rounds.
class FedDmcState {
public:
  explicit FedDmcState(double alpha = 0.5);

  /// S <- alpha * S_prev + (1 - alpha) * s, unseen ids start at 0.5.
  /// Returns the positions whose updated score exceeds 0.5.
  std::vector<std::size_t> update(std::span<const int> ids, std::span<const int> labels);

  double score(int id) const;
  double alpha() const noexcept { return alpha_; }

private:
  double alpha_;
  std::map<int, double> scores_;
};

/// Scores the round's tree labels and turns them into a verdict.
Verdict feddmc_ensemble(FedDmcState& state, std::span<const int> ids,
                        std::span<const int> labels);

// LoMar -------------------------------------------------------------------

enum class LoMarDirection { flag_below, flag_above };
std::string to_string(LoMarDirection d);
LoMarDirection lomar_direction_from_string(const std::string& s);

struct LoMarConfig {
  int k = 5;
  int probe_batch = 64;
  double epsilon = 1.0;
  LoMarDirection direction = LoMarDirection::flag_below;

  void validate() const;
};

inline constexpr double lomar_divergence_factor = 1e6;

/// Per-client mean softmax output on the probe batch.
Eigen::MatrixXd lomar_outputs(std::span<const WeightVector> updates, const MlpShape& shape,
                              const Eigen::MatrixXd& probe);

/// Malicious factor F(i) from the rows of `outputs` (clients x labels).
std::vector<double> lomar_factors(const Eigen::MatrixXd& outputs, int k);

std::vector<double> lomar_scores(std::span<const WeightVector> updates,
                                 const MlpShape& shape, const Eigen::MatrixXd& probe,
                                 const LoMarConfig& cfg);

/// Positions flagged by the threshold rule.
std::vector<std::size_t> lomar_classify(std::span<const double> factors, double epsilon,
                                        LoMarDirection direction = LoMarDirection::flag_below);

} // namespace flaegis
