#pragma once

#include "flaegis/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace flaegis {

/// Labelled samples, one row per sample.
struct Dataset {
  Eigen::MatrixXd features; // n x d
  std::vector<int> labels;  // n entries in [0, classes)
  int classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }

  /// Throws unless n >= 1, rows match labels and every label is in range.
  void validate() const;

  Dataset subset(std::span<const std::size_t> rows) const;
};

struct MlpShape {
  std::size_t input = 8;
  std::vector<std::size_t> hidden{ 16 };
  std::size_t classes = 5;

  std::size_t param_count() const;
  /// Weight matrix [out, in] then bias [out], per layer.
  std::vector<std::vector<std::size_t>> layer_shapes() const;
  std::string describe() const;
};

/// ReLU hidden layers and a softmax output, parameters stored flat.
class MlpModel {
public:
  MlpModel(MlpShape shape, WeightVector params);

  static MlpModel initialize(const MlpShape& shape, std::uint64_t seed);

  const MlpShape& shape() const noexcept { return shape_; }
  const WeightVector& params() const noexcept { return params_; }

  /// Class probabilities, one row per input row.
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;

  /// Mean cross-entropy over the batch.
  double loss(const Eigen::MatrixXd& x, std::span<const int> labels) const;

private:
  MlpShape shape_;
  WeightVector params_;
};

/// Exact backprop gradient of the mean cross-entropy.
WeightVector gradient(const MlpModel& model, const Eigen::MatrixXd& x,
                      std::span<const int> labels);

struct TrainConfig {
  int epochs = 1;
  int batch_size = 32;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Adam on mini-batches with a fresh optimizer state. Returns the trained
/// flattened weights.
WeightVector local_train(const MlpModel& model, const Dataset& ds,
                         const TrainConfig& cfg, std::uint64_t seed);

double evaluate(const MlpModel& model, const Dataset& ds);

/// Gaussian class clusters, centers drawn from N(0, scale^2 I), per-sample
/// noise N(0, spread^2 I). Labels are balanced (round-robin) then shuffled.
Dataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t d, int classes,
                      double cluster_spread, double center_scale = 1.0);

/// Uniform random inputs on the bounding box of `ds`, for probing models.
Eigen::MatrixXd probe_inputs(const Dataset& ds, std::size_t count, std::uint64_t seed);

/// Holds out `test_fraction` of the rows uniformly at random.
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double test_fraction,
                                          std::uint64_t seed);

/// Label-skewed split: each class is divided across clients with
/// proportions drawn from Dirichlet(alpha). Resamples until no client is
/// empty.
std::vector<Dataset> dirichlet_partition(const Dataset& ds, std::size_t clients,
                                         double alpha, std::uint64_t seed);

/// Shannon entropy of the label histogram, normalized by log(classes).
double label_entropy(const Dataset& ds, int classes);

/// CSV with header `f0,...,f{d-1},label`.
Dataset load_csv(const std::filesystem::path& path, int classes = 0);

} // namespace flaegis
