#include "flaegis/detect.hpp"

#include "flaegis/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace flaegis {

namespace {

std::vector<std::vector<double>> centered(std::span<const std::vector<double>> vectors,
                                          Centering centering)
{
  std::vector<std::vector<double>> out(vectors.begin(), vectors.end());
  if (centering == Centering::vector_mean) {
    for (auto& v : out) {
      if (v.empty())
        continue;
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      for (auto& x : v)
        x -= m;
    }
  } else if (centering == Centering::round_mean && !out.empty()) {
    std::vector<double> mean(out.front().size(), 0.0);
    for (const auto& v : out)
      for (std::size_t i = 0; i < mean.size(); ++i)
        mean[i] += v[i];
    for (auto& m : mean)
      m /= static_cast<double>(out.size());
    for (auto& v : out)
      for (std::size_t i = 0; i < mean.size(); ++i)
        v[i] -= mean[i];
  } else if (centering == Centering::round_median && !out.empty()) {
    const std::size_t dim = out.front().size();
    std::vector<double> median(dim);
    std::vector<double> column(out.size());
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t k = 0; k < out.size(); ++k)
        column[k] = out[k][i];
      std::sort(column.begin(), column.end());
      const std::size_t h = column.size() / 2;
      median[i] = column.size() % 2 ? column[h] : 0.5 * (column[h - 1] + column[h]);
    }
    for (auto& v : out)
      for (std::size_t i = 0; i < dim; ++i)
        v[i] -= median[i];
  }
  return out;
}

std::vector<double> as_doubles(const SymbolicVector& s)
{
  return { s.symbols.begin(), s.symbols.end() };
}

} // namespace

std::string to_string(RangeMode m)
{
  return m == RangeMode::round_global ? "round_global" : "per_client";
}

RangeMode range_mode_from_string(const std::string& s)
{
  if (s == "round_global")
    return RangeMode::round_global;
  if (s == "per_client")
    return RangeMode::per_client;
  throw std::invalid_argument("unknown range mode '" + s +
                              "' (expected one of: round_global, per_client)");
}

std::string to_string(KMeansInput m)
{
  return m == KMeansInput::embedding ? "embedding" : "similarity_rows";
}

KMeansInput kmeans_input_from_string(const std::string& s)
{
  if (s == "embedding")
    return KMeansInput::embedding;
  if (s == "similarity_rows")
    return KMeansInput::similarity_rows;
  throw std::invalid_argument("unknown kmeans input '" + s +
                              "' (expected one of: embedding, similarity_rows)");
}

std::string to_string(Centering m)
{
  switch (m) {
    case Centering::none:
      return "none";
    case Centering::vector_mean:
      return "vector_mean";
    case Centering::round_mean:
      return "round_mean";
    case Centering::round_median:
      return "round_median";
  }
  return "none";
}

Centering centering_from_string(const std::string& s)
{
  if (s == "none")
    return Centering::none;
  if (s == "vector_mean")
    return Centering::vector_mean;
  if (s == "round_mean")
    return Centering::round_mean;
  if (s == "round_median")
    return Centering::round_median;
  throw std::invalid_argument("unknown centering '" + s +
                              "' (expected one of: none, vector_mean, round_mean, round_median)");
}

void SaxConfig::validate() const
{
  if (bands < 2)
    throw std::invalid_argument("detect.sax.bands must be at least 2");
  if (paa_window < 1)
    throw std::invalid_argument("detect.sax.paa_window must be at least 1");
}

void DetectConfig::validate() const
{
  sax.validate();
  if (k_max < 2)
    throw std::invalid_argument("detect.k_max must be at least 2");
  if (embedding_dims < 0)
    throw std::invalid_argument("detect.embedding_dims must be non-negative");
  if (kmeans_max_iter < 1 || !(kmeans_tol > 0.0))
    throw std::invalid_argument("detect k-means settings must be positive");
}

std::vector<double> paa(std::span<const double> values, int window)
{
  if (window < 1)
    throw std::invalid_argument("paa: window must be at least 1");
  const auto w = static_cast<std::size_t>(window);
  std::vector<double> out;
  out.reserve((values.size() + w - 1) / w);
  for (std::size_t start = 0; start < values.size(); start += w) {
    const std::size_t stop = std::min(values.size(), start + w);
    double s = 0.0;
    for (std::size_t i = start; i < stop; ++i)
      s += values[i];
    out.push_back(s / static_cast<double>(stop - start));
  }
  return out;
}

SymbolicVector sax_transform(const WeightVector& v, const SaxConfig& cfg, double lo,
                             double hi)
{
  cfg.validate();
  const auto means = paa(v.values(), cfg.paa_window);
  SymbolicVector out;
  out.symbols.reserve(means.size());
  if (!(lo < hi)) {
    out.symbols.assign(means.size(), cfg.bands / 2);
    return out;
  }
  const double width = hi - lo;
  for (double x : means) {
    const double scaled = std::floor(cfg.bands * (x - lo) / width);
    const double clipped = std::clamp(scaled, 0.0, static_cast<double>(cfg.bands - 1));
    out.symbols.push_back(static_cast<int>(clipped));
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b)
{
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: length mismatch");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0)
    return (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double cosine_similarity(const SymbolicVector& a, const SymbolicVector& b)
{
  return cosine_similarity(as_doubles(a), as_doubles(b));
}

SimilarityMatrix build_similarity(std::span<const std::vector<double>> vectors,
                                  Centering centering)
{
  if (vectors.size() < 2)
    throw std::invalid_argument("build_similarity: need at least 2 clients");
  const auto v = centered(vectors, centering);
  const auto k = static_cast<Eigen::Index>(v.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double c = std::max(0.0, cosine_similarity(v[static_cast<std::size_t>(i)],
                                                       v[static_cast<std::size_t>(j)]));
      m(i, j) = c;
      m(j, i) = c;
    }
  }
  return SimilarityMatrix(std::move(m));
}

SimilarityMatrix build_similarity(std::span<const SymbolicVector> vectors,
                                  Centering centering)
{
  std::vector<std::vector<double>> v;
  v.reserve(vectors.size());
  for (const auto& s : vectors)
    v.push_back(as_doubles(s));
  return build_similarity(v, centering);
}

std::pair<int, SpectralState> spectral_count(const SimilarityMatrix& w, int k_max)
{
  if (k_max < 2)
    throw std::invalid_argument("spectral_count: k_max must be at least 2");
  SpectralState s;
  s.similarity = w.entries();
  const Eigen::Index k = s.similarity.rows();
  s.degree = s.similarity.rowwise().sum();
  s.laplacian = Eigen::MatrixXd(s.degree.asDiagonal()) - s.similarity;
  const auto eig = linalg::jacobi_eigen(s.laplacian);
  s.eigenvalues = eig.values;
  s.eigenvectors = eig.vectors;
  s.embedding = s.eigenvectors.leftCols(std::min<Eigen::Index>(2, k));

  // Gaps lambda_{i+1} - lambda_i for i in [1, k_max), 1-based.
  const Eigen::Index limit = std::min<Eigen::Index>(k_max, k);
  int best = 1;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 1; i < limit; ++i) {
    const double gap = s.eigenvalues[i] - s.eigenvalues[i - 1];
    if (gap > best_gap) {
      best_gap = gap;
      best = static_cast<int>(i);
    }
  }
  const double floor = 1e-8 * s.laplacian.trace() / static_cast<double>(k);
  if (!(best_gap >= floor) || best_gap <= 0.0)
    best = 1;
  return { best, std::move(s) };
}

TwoWaySplit two_means(const Eigen::MatrixXd& points, std::uint64_t seed, int max_iter,
                      double tol)
{
  const Eigen::Index n = points.rows();
  if (n < 2)
    throw std::invalid_argument("two_means: need at least 2 points");
  TwoWaySplit split;

  bool all_same = true;
  for (Eigen::Index i = 1; i < n && all_same; ++i)
    all_same = (points.row(i) - points.row(0)).squaredNorm() == 0.0;
  if (all_same) {
    split.degenerate = true;
    for (Eigen::Index i = 0; i < n; ++i)
      split.first.push_back(static_cast<std::size_t>(i));
    return split;
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::MatrixXd centroids(2, points.cols());
  centroids.row(0) = points.row(pick(rng));
  {
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] = (points.row(i) - centroids.row(0)).squaredNorm();
    std::discrete_distribution<Eigen::Index> weighted(d2.begin(), d2.end());
    centroids.row(1) = points.row(weighted(rng));
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d0 = (points.row(i) - centroids.row(0)).squaredNorm();
      const double d1 = (points.row(i) - centroids.row(1)).squaredNorm();
      assign[static_cast<std::size_t>(i)] = d1 < d0 ? 1 : 0;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(2, points.cols());
    Eigen::Index counts[2] = { 0, 0 };
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = assign[static_cast<std::size_t>(i)];
      next.row(a) += points.row(i);
      ++counts[a];
    }
    for (int c = 0; c < 2; ++c) {
      if (counts[c] > 0)
        next.row(c) /= static_cast<double>(counts[c]);
      else
        next.row(c) = centroids.row(c);
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = next;
    if (shift <= tol)
      break;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    (assign[static_cast<std::size_t>(i)] == 0 ? split.first : split.second)
      .push_back(static_cast<std::size_t>(i));
  if (split.first.empty() || split.second.empty()) {
    split.degenerate = true;
    split.first.clear();
    split.second.clear();
    for (Eigen::Index i = 0; i < n; ++i)
      split.first.push_back(static_cast<std::size_t>(i));
  }
  return split;
}

TwoWaySplit two_means_split(const SpectralState& state, std::uint64_t seed,
                            KMeansInput input, int max_iter, double tol, int embedding_dims)
{
  if (input == KMeansInput::similarity_rows)
    return two_means(state.similarity, seed, max_iter, tol);
  if (embedding_dims == 2 || state.eigenvectors.cols() == 0)
    return two_means(state.embedding, seed, max_iter, tol);
  const auto cols = std::clamp<Eigen::Index>(embedding_dims, 1, state.eigenvectors.cols());
  return two_means(state.eigenvectors.leftCols(cols), seed, max_iter, tol);
}

Verdict flag_malicious(std::span<const int> ids, const TwoWaySplit& split,
                       const SimilarityMatrix& w, int estimated_clusters)
{
  if (static_cast<Eigen::Index>(ids.size()) != w.size())
    throw std::invalid_argument("flag_malicious: id count does not match matrix");
  if (split.first.size() + split.second.size() != ids.size())
    throw std::invalid_argument("flag_malicious: split must cover every client");
  if (estimated_clusters <= 1 || split.degenerate || split.first.empty() ||
      split.second.empty())
    return Verdict::all_benign(ids);

  const std::vector<std::size_t>* flagged = nullptr;
  if (split.first.size() != split.second.size()) {
    flagged = split.first.size() < split.second.size() ? &split.first : &split.second;
  } else {
    const auto mass = [&](const std::vector<std::size_t>& group) {
      double m = 0.0;
      for (auto r : group)
        m += w.entries().row(static_cast<Eigen::Index>(r)).sum();
      return m;
    };
    flagged = mass(split.first) < mass(split.second) ? &split.first : &split.second;
  }
  std::vector<int> flagged_ids;
  for (auto r : *flagged)
    flagged_ids.push_back(ids[r]);
  return Verdict::from_flags(ids, flagged_ids, estimated_clusters);
}

Identification flaegis_identify_detailed(std::span<const ServerUpdate> updates,
                                         const DetectConfig& cfg, std::uint64_t seed)
{
  cfg.validate();
  if (updates.size() < 2)
    throw std::invalid_argument("flaegis_identify: need at least 2 clients");
  std::vector<int> ids;
  for (const auto& u : updates) {
    if (u.weights.size() != updates.front().weights.size())
      throw std::invalid_argument("flaegis_identify: dimension mismatch");
    ids.push_back(u.client_id);
  }

  std::vector<std::vector<double>> features;
  features.reserve(updates.size());
  if (cfg.use_sax) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& u : updates) {
      for (double x : u.weights) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    for (const auto& u : updates) {
      double l = lo;
      double h = hi;
      if (cfg.sax.range_mode == RangeMode::per_client && !u.weights.empty()) {
        const auto [mn, mx] = std::minmax_element(u.weights.begin(), u.weights.end());
        l = *mn;
        h = *mx;
      }
      const auto sym = sax_transform(u.weights, cfg.sax, l, h);
      features.emplace_back(sym.symbols.begin(), sym.symbols.end());
    }
  } else {
    for (const auto& u : updates)
      features.push_back(u.weights.vec());
  }

  auto similarity = build_similarity(features, cfg.centering);
  auto [clusters, state] = spectral_count(similarity, cfg.k_max);
  Verdict verdict = Verdict::all_benign(ids);
  if (clusters > 1) {
    const auto split =
      two_means_split(state, seed, cfg.kmeans_input, cfg.kmeans_max_iter, cfg.kmeans_tol,
                      cfg.embedding_dims == 0 ? clusters : cfg.embedding_dims);
    if (!split.degenerate)
      verdict = flag_malicious(ids, split, similarity, clusters);
  }
  return { std::move(verdict), std::move(similarity), state.eigenvalues };
}

Verdict flaegis_identify(std::span<const ServerUpdate> updates, const DetectConfig& cfg,
                         std::uint64_t seed)
{
  return flaegis_identify_detailed(updates, cfg, seed).verdict;
}

} // namespace flaegis
