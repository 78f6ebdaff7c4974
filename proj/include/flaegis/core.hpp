#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flaegis {

/// Raised when a value that must be finite is NaN or infinite.
class NonFiniteError : public std::invalid_argument {
public:
  NonFiniteError(const std::string& what, std::size_t index)
    : std::invalid_argument(what + ": non-finite entry at index " +
                            std::to_string(index))
    , index_(index)
  {
  }

  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

/// Flattened model parameters of one client. Every entry is finite.
class WeightVector {
public:
  WeightVector() = default;
  explicit WeightVector(std::vector<double> values);
  WeightVector(std::initializer_list<double> values);

  static WeightVector zeros(std::size_t n);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

private:
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double l2_distance(std::span<const double> a, std::span<const double> b);

/// One client's submission for a round. The malice flag is scoring-only.
struct ClientUpdate {
  int client_id = 0;
  WeightVector weights;
  bool ground_truth_malicious = false;
};

/// What the server (and therefore every defense) is allowed to see.
struct ServerUpdate {
  int client_id = 0;
  WeightVector weights;
};

std::vector<ServerUpdate> server_view(std::span<const ClientUpdate> updates);

/// Client-by-client similarity: symmetric, unit diagonal, entries in [0, 1].
class SimilarityMatrix {
public:
  explicit SimilarityMatrix(Eigen::MatrixXd entries);

  Eigen::Index size() const noexcept { return entries_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
  const Eigen::MatrixXd& entries() const noexcept { return entries_; }

private:
  Eigen::MatrixXd entries_;
};

/// Detection outcome of one round. Both id lists are sorted and disjoint.
struct Verdict {
  std::vector<int> benign_ids;
  std::vector<int> flagged_ids;
  int estimated_clusters = 1;

  /// Builds a verdict over `participants` with `flagged` removed from the
  /// benign set. Throws if a flagged id is not a participant or if a
  /// single-cluster verdict carries flags.
  static Verdict from_flags(std::span<const int> participants,
                            std::span<const int> flagged,
                            int estimated_clusters);

  static Verdict all_benign(std::span<const int> participants);

  bool is_flagged(int id) const;
};

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

std::size_t shape_size(std::span<const std::size_t> shape);

WeightVector flatten(std::span<const Tensor> layers);
std::vector<Tensor> unflatten(const WeightVector& v,
                              std::span<const std::vector<std::size_t>> shapes);

enum class Purpose : std::uint32_t {
  model_init = 1,
  data = 2,
  holdout = 3,
  partition = 4,
  local_train = 5,
  malicious_draw = 6,
  label_flip = 7,
  attack = 8,
  detect = 9,
  probe = 10,
  baseline = 11,
};

struct RngSeed {
  std::uint64_t master = 0;
};

/// Counter-based stream seed for (round, client, purpose). Pure.
std::uint64_t derive_seed(RngSeed seed, std::int64_t round, std::int64_t client,
                          Purpose purpose);

} // namespace flaegis
