#pragma once

#include "flaegis/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flaegis {

enum class RangeMode { round_global, per_client };
enum class KMeansInput { embedding, similarity_rows };
/// How vectors are centered before the cosine. `none` uses raw values;
/// `vector_mean` subtracts each vector's own mean; `round_mean` subtracts
/// the coordinate-wise mean over the round's clients; `round_median` the
/// coordinate-wise median.
enum class Centering { none, vector_mean, round_mean, round_median };

std::string to_string(RangeMode m);
RangeMode range_mode_from_string(const std::string& s);
std::string to_string(KMeansInput m);
KMeansInput kmeans_input_from_string(const std::string& s);
std::string to_string(Centering m);
Centering centering_from_string(const std::string& s);

struct SaxConfig {
  int bands = 45;
  int paa_window = 1;
  RangeMode range_mode = RangeMode::round_global;

  void validate() const;
};

struct SymbolicVector {
  std::vector<int> symbols;

  friend bool operator==(const SymbolicVector&, const SymbolicVector&) = default;
};

struct DetectConfig {
  SaxConfig sax;
  bool use_sax = true;
  Centering centering = Centering::vector_mean;
  int k_max = 5;
  KMeansInput kmeans_input = KMeansInput::embedding;
  /// Leading eigenvectors fed to 2-means; 0 uses the estimated cluster count.
  int embedding_dims = 2;
  int kmeans_max_iter = 100;
  double kmeans_tol = 1e-6;

  void validate() const;
};

/// Window means; the trailing window may be shorter.
std::vector<double> paa(std::span<const double> values, int window);

/// PAA followed by equidistant banding of [lo, hi] into `bands` symbols.
/// A degenerate range maps everything to the middle band.
SymbolicVector sax_transform(const WeightVector& v, const SaxConfig& cfg, double lo,
                             double hi);

/// Cosine over raw values, clamped to [-1, 1]. Two zero vectors are fully
/// similar; one zero vector is orthogonal to anything.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const SymbolicVector& a, const SymbolicVector& b);

/// m_kl = max(0, cos(v_k, v_l)) after the requested centering, unit diagonal.
SimilarityMatrix build_similarity(std::span<const std::vector<double>> vectors,
                                  Centering centering = Centering::none);
SimilarityMatrix build_similarity(std::span<const SymbolicVector> vectors,
                                  Centering centering = Centering::none);

struct SpectralState {
  Eigen::MatrixXd similarity;
  Eigen::VectorXd degree;
  Eigen::MatrixXd laplacian;
  Eigen::VectorXd eigenvalues; // ascending
  Eigen::MatrixXd eigenvectors;
  Eigen::MatrixXd embedding;   // eigenvectors of the two smallest eigenvalues
};

/// Eigengap estimate of the cluster count of the graph L = D - W, capped at
/// k_max. Returns 1 when the largest gap is below 1e-8 * trace(L) / K.
std::pair<int, SpectralState> spectral_count(const SimilarityMatrix& w, int k_max = 5);

struct TwoWaySplit {
  std::vector<std::size_t> first;  // row indices
  std::vector<std::size_t> second;
  bool degenerate = false;         // all points coincide, no split exists
};

/// k-means with k = 2, k-means++ seeding.
TwoWaySplit two_means(const Eigen::MatrixXd& points, std::uint64_t seed,
                      int max_iter = 100, double tol = 1e-6);
TwoWaySplit two_means_split(const SpectralState& state, std::uint64_t seed,
                            KMeansInput input = KMeansInput::embedding,
                            int max_iter = 100, double tol = 1e-6, int embedding_dims = 2);

/// Larger group is benign. On a size tie, the group with the smaller total
/// similarity mass is flagged. `ids[i]` names row i.
Verdict flag_malicious(std::span<const int> ids, const TwoWaySplit& split,
                       const SimilarityMatrix& w, int estimated_clusters);

struct Identification {
  Verdict verdict;
  SimilarityMatrix similarity;
  Eigen::VectorXd eigenvalues;
};

/// SAX -> cosine similarity -> spectral count -> (2-means -> minority flag).
Identification flaegis_identify_detailed(std::span<const ServerUpdate> updates,
                                         const DetectConfig& cfg, std::uint64_t seed);
Verdict flaegis_identify(std::span<const ServerUpdate> updates, const DetectConfig& cfg,
                         std::uint64_t seed);

} // namespace flaegis
