#include "flaegis/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flaegis {

namespace {

void check_finite(std::span<const double> values, const char* what)
{
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw NonFiniteError(what, i);
  }
}

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

} // namespace

WeightVector::WeightVector(std::vector<double> values)
  : values_(std::move(values))
{
  check_finite(values_, "WeightVector");
}

WeightVector::WeightVector(std::initializer_list<double> values)
  : WeightVector(std::vector<double>(values))
{
}

WeightVector WeightVector::zeros(std::size_t n)
{
  return WeightVector(std::vector<double>(n, 0.0));
}

double dot(std::span<const double> a, std::span<const double> b)
{
  if (a.size() != b.size())
    throw std::invalid_argument("dot: dimension mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double l2_norm(std::span<const double> a)
{
  return std::sqrt(dot(a, a));
}

double l2_distance(std::span<const double> a, std::span<const double> b)
{
  if (a.size() != b.size())
    throw std::invalid_argument("l2_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<ServerUpdate> server_view(std::span<const ClientUpdate> updates)
{
  std::vector<ServerUpdate> out;
  out.reserve(updates.size());
  for (const auto& u : updates)
    out.push_back({ u.client_id, u.weights });
  return out;
}

SimilarityMatrix::SimilarityMatrix(Eigen::MatrixXd entries)
  : entries_(std::move(entries))
{
  if (entries_.rows() != entries_.cols())
    throw std::invalid_argument("SimilarityMatrix: must be square");
  if (!entries_.allFinite())
    throw std::invalid_argument("SimilarityMatrix: non-finite entry");
  for (Eigen::Index i = 0; i < entries_.rows(); ++i) {
    if (std::abs(entries_(i, i) - 1.0) > 1e-12)
      throw std::invalid_argument("SimilarityMatrix: diagonal must be 1");
    for (Eigen::Index j = 0; j < entries_.cols(); ++j) {
      const double x = entries_(i, j);
      if (x < 0.0 || x > 1.0)
        throw std::invalid_argument("SimilarityMatrix: entry outside [0, 1]");
      if (std::abs(x - entries_(j, i)) > 1e-12)
        throw std::invalid_argument("SimilarityMatrix: not symmetric");
    }
  }
}

Verdict Verdict::from_flags(std::span<const int> participants,
                            std::span<const int> flagged,
                            int estimated_clusters)
{
  if (estimated_clusters < 1)
    throw std::invalid_argument("Verdict: estimated_clusters must be positive");
  std::vector<int> all(participants.begin(), participants.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end())
    throw std::invalid_argument("Verdict: duplicate participant id");

  Verdict v;
  v.estimated_clusters = estimated_clusters;
  v.flagged_ids.assign(flagged.begin(), flagged.end());
  std::sort(v.flagged_ids.begin(), v.flagged_ids.end());
  v.flagged_ids.erase(std::unique(v.flagged_ids.begin(), v.flagged_ids.end()),
                      v.flagged_ids.end());
  for (int id : v.flagged_ids) {
    if (!std::binary_search(all.begin(), all.end(), id))
      throw std::invalid_argument("Verdict: flagged id " + std::to_string(id) +
                                  " is not a participant");
  }
  if (estimated_clusters == 1 && !v.flagged_ids.empty())
    throw std::invalid_argument("Verdict: single-cluster verdict with flags");
  std::set_difference(all.begin(), all.end(), v.flagged_ids.begin(),
                      v.flagged_ids.end(), std::back_inserter(v.benign_ids));
  return v;
}

Verdict Verdict::all_benign(std::span<const int> participants)
{
  return from_flags(participants, {}, 1);
}

bool Verdict::is_flagged(int id) const
{
  return std::binary_search(flagged_ids.begin(), flagged_ids.end(), id);
}

std::size_t shape_size(std::span<const std::size_t> shape)
{
  return std::accumulate(shape.begin(), shape.end(), std::size_t{ 1 },
                         std::multiplies<>());
}

WeightVector flatten(std::span<const Tensor> layers)
{
  std::vector<double> out;
  std::size_t offset = 0;
  for (const auto& t : layers) {
    if (t.values.size() != shape_size(t.shape))
      throw std::invalid_argument("flatten: tensor values do not match shape");
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      if (!std::isfinite(t.values[i]))
        throw NonFiniteError("flatten", offset + i);
    }
    out.insert(out.end(), t.values.begin(), t.values.end());
    offset += t.values.size();
  }
  return WeightVector(std::move(out));
}

std::vector<Tensor> unflatten(const WeightVector& v,
                              std::span<const std::vector<std::size_t>> shapes)
{
  std::size_t total = 0;
  for (const auto& s : shapes)
    total += shape_size(s);
  if (total != v.size())
    throw std::invalid_argument("unflatten: vector length " +
                                std::to_string(v.size()) +
                                " does not match shape total " +
                                std::to_string(total));
  std::vector<Tensor> out;
  out.reserve(shapes.size());
  auto it = v.begin();
  for (const auto& s : shapes) {
    const auto n = static_cast<std::ptrdiff_t>(shape_size(s));
    out.push_back({ s, std::vector<double>(it, it + n) });
    it += n;
  }
  return out;
}

std::uint64_t derive_seed(RngSeed seed, std::int64_t round, std::int64_t client,
                          Purpose purpose)
{
  std::uint64_t h = splitmix64(seed.master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ static_cast<std::uint64_t>(round));
  h = splitmix64(h ^ static_cast<std::uint64_t>(client));
  return h;
}

} // namespace flaegis
