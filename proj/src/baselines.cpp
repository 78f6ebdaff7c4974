#include "flaegis/baselines.hpp"

#include "flaegis/aggregate.hpp"
#include "flaegis/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flaegis {

namespace {

constexpr double inv_sqrt_2pi = 0.39894228040143267794;

double gaussian_kernel(double u)
{
  return inv_sqrt_2pi * std::exp(-0.5 * u * u);
}

std::vector<std::size_t> all_positions(std::size_t n)
{
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{ 0 });
  return out;
}

} // namespace

// SignGuard ---------------------------------------------------------------

void SignGuardConfig::validate() const
{
  if (!(lower > 0.0 && lower < upper))
    throw std::invalid_argument("signguard: need 0 < lower < upper");
  if (!(meanshift_bandwidth > 0.0))
    throw std::invalid_argument("signguard.meanshift_bandwidth must be positive");
}

double median_norm(std::span<const WeightVector> grads)
{
  if (grads.empty())
    throw std::invalid_argument("median_norm: no gradients");
  std::vector<double> norms;
  norms.reserve(grads.size());
  for (const auto& g : grads)
    norms.push_back(l2_norm(g.values()));
  std::sort(norms.begin(), norms.end());
  const std::size_t n = norms.size();
  return n % 2 == 1 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
}

std::vector<std::size_t> signguard_norm_filter(std::span<const WeightVector> grads,
                                               const SignGuardConfig& cfg)
{
  cfg.validate();
  const double m = median_norm(grads);
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    const double norm = l2_norm(grads[k].values());
    if (m == 0.0) {
      if (norm == 0.0)
        keep.push_back(k);
      continue;
    }
    const double ratio = norm / m;
    if (ratio >= cfg.lower && ratio <= cfg.upper)
      keep.push_back(k);
  }
  return keep;
}

Eigen::Vector3d sign_features(const WeightVector& g)
{
  Eigen::Vector3d f = Eigen::Vector3d::Zero();
  if (g.empty())
    return f;
  for (double x : g) {
    if (x > 0.0)
      f[0] += 1.0;
    else if (x < 0.0)
      f[1] += 1.0;
    else
      f[2] += 1.0;
  }
  return f / static_cast<double>(g.size());
}

MeanShiftResult mean_shift(const std::vector<Eigen::VectorXd>& points, double bandwidth,
                           int max_iter)
{
  if (!(bandwidth > 0.0))
    throw std::invalid_argument("mean_shift: bandwidth must be positive");
  MeanShiftResult r;
  std::vector<Eigen::VectorXd> modes;
  for (const auto& start : points) {
    Eigen::VectorXd x = start;
    for (int it = 0; it < max_iter; ++it) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(x.size());
      int count = 0;
      for (const auto& p : points) {
        if ((p - x).norm() <= bandwidth) {
          sum += p;
          ++count;
        }
      }
      const Eigen::VectorXd next = sum / static_cast<double>(count);
      const double shift = (next - x).norm();
      x = next;
      if (shift <= 1e-3 * bandwidth)
        break;
    }
    modes.push_back(x);
  }
  for (const auto& m : modes) {
    const bool known = std::any_of(r.centers.begin(), r.centers.end(),
                                   [&](const auto& c) { return (c - m).norm() < bandwidth; });
    if (!known)
      r.centers.push_back(m);
  }
  for (const auto& p : points) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < r.centers.size(); ++c) {
      const double d = (p - r.centers[c]).norm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    r.labels.push_back(best);
  }
  return r;
}

std::vector<std::size_t> signguard_sign_filter(std::span<const WeightVector> grads,
                                               const SignGuardConfig& cfg)
{
  cfg.validate();
  if (grads.size() < 2)
    return all_positions(grads.size());
  std::vector<Eigen::VectorXd> features;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (const auto& g : grads) {
    features.push_back(sign_features(g));
    mean += features.back();
  }
  mean /= static_cast<double>(grads.size());

  const auto ms = mean_shift(features, cfg.meanshift_bandwidth);
  if (ms.centers.size() < 2)
    return all_positions(grads.size());

  std::vector<std::size_t> sizes(ms.centers.size(), 0);
  for (int l : ms.labels)
    ++sizes[static_cast<std::size_t>(l)];
  std::size_t smallest = 0;
  for (std::size_t c = 1; c < sizes.size(); ++c) {
    if (sizes[c] < sizes[smallest] ||
        (sizes[c] == sizes[smallest] &&
         (ms.centers[c] - mean).norm() > (ms.centers[smallest] - mean).norm()))
      smallest = c;
  }
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < grads.size(); ++k)
    if (static_cast<std::size_t>(ms.labels[k]) != smallest)
      keep.push_back(k);
  return keep;
}

WeightVector signguard_aggregate(std::span<const WeightVector> grads,
                                 std::span<const std::size_t> accepted, double median)
{
  if (accepted.empty())
    throw std::invalid_argument("signguard_aggregate: every client was filtered out");
  const std::size_t p = grads[accepted.front()].size();
  std::vector<double> out(p, 0.0);
  for (auto k : accepted) {
    const auto& g = grads[k];
    if (g.size() != p)
      throw std::invalid_argument("signguard_aggregate: dimension mismatch");
    const double norm = l2_norm(g.values());
    const double scale = norm > 0.0 ? std::min(1.0, median / norm) : 1.0;
    for (std::size_t i = 0; i < p; ++i)
      out[i] += g[i] * scale;
  }
  for (auto& x : out)
    x /= static_cast<double>(accepted.size());
  return WeightVector(std::move(out));
}

WeightVector signguard_aggregate(std::span<const WeightVector> grads,
                                 std::span<const std::size_t> accepted)
{
  return signguard_aggregate(grads, accepted, median_norm(grads));
}

// FedDMC ------------------------------------------------------------------

void FedDmcConfig::validate() const
{
  if (pca_dims < 1)
    throw std::invalid_argument("feddmc.pca_dims must be at least 1");
  if (!(min_leaf_fraction > 0.0 && min_leaf_fraction <= 1.0))
    throw std::invalid_argument("feddmc.min_leaf_fraction must be in (0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("feddmc.alpha must be in [0, 1]");
}

Eigen::MatrixXd feddmc_project(std::span<const WeightVector> weights, int dims)
{
  if (weights.size() < 2)
    throw std::invalid_argument("feddmc_project: need at least 2 clients");
  if (dims < 1)
    throw std::invalid_argument("feddmc_project: dims must be positive");
  const auto n = static_cast<Eigen::Index>(weights.size());
  const auto p = static_cast<Eigen::Index>(weights.front().size());
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(weights[static_cast<std::size_t>(i)].size()) != p)
      throw std::invalid_argument("feddmc_project: dimension mismatch");
    for (Eigen::Index j = 0; j < p; ++j)
      x(i, j) = weights[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  x.rowwise() -= x.colwise().mean();

  // Principal directions from the n x n Gram matrix: v = X^T u / ||X^T u||.
  const Eigen::MatrixXd gram = x * x.transpose();
  const auto eig = linalg::jacobi_eigen(gram);
  const double top = std::max(eig.values.maxCoeff(), 0.0);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, dims);
  for (int c = 0; c < dims && c < n; ++c) {
    const Eigen::Index col = n - 1 - c;
    const double lambda = eig.values[col];
    if (!(lambda > 1e-12 * top) || top == 0.0)
      break;
    Eigen::VectorXd dir = x.transpose() * eig.vectors.col(col);
    dir.normalize();
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir[arg] < 0.0)
      dir = -dir;
    out.col(c) = x * dir;
  }
  return out;
}

std::vector<HacNode> hac_average_linkage(const Eigen::MatrixXd& points)
{
  const auto n = static_cast<std::size_t>(points.rows());
  if (n == 0)
    throw std::invalid_argument("hac_average_linkage: no points");
  Eigen::MatrixXd dist(points.rows(), points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = 0; j < points.rows(); ++j)
      dist(i, j) = (points.row(i) - points.row(j)).norm();

  std::vector<HacNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i)
    nodes[i].leaves = { i };
  std::vector<int> active(n);
  std::iota(active.begin(), active.end(), 0);

  const auto linkage = [&](const HacNode& a, const HacNode& b) {
    double s = 0.0;
    for (auto i : a.leaves)
      for (auto j : b.leaves)
        s += dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return s / static_cast<double>(a.leaves.size() * b.leaves.size());
  };

  while (active.size() > 1) {
    std::size_t bi = 0;
    std::size_t bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        const double d = linkage(nodes[static_cast<std::size_t>(active[i])],
                                 nodes[static_cast<std::size_t>(active[j])]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    HacNode merged;
    const int a = active[bi];
    const int b = active[bj];
    const auto& la = nodes[static_cast<std::size_t>(a)].leaves;
    const auto& lb = nodes[static_cast<std::size_t>(b)].leaves;
    // Left child holds the smallest client index.
    const bool a_first = *std::min_element(la.begin(), la.end()) <
                         *std::min_element(lb.begin(), lb.end());
    merged.left = a_first ? a : b;
    merged.right = a_first ? b : a;
    merged.leaves = la;
    merged.leaves.insert(merged.leaves.end(), lb.begin(), lb.end());
    std::sort(merged.leaves.begin(), merged.leaves.end());
    nodes.push_back(std::move(merged));
    active.erase(active.begin() + static_cast<long>(bj));
    active[bi] = static_cast<int>(nodes.size() - 1);
  }
  return nodes;
}

std::vector<int> feddmc_tree_detect(const Eigen::MatrixXd& projected, double min_leaf_fraction)
{
  const auto n = static_cast<std::size_t>(projected.rows());
  if (n < 2)
    throw std::invalid_argument("feddmc_tree_detect: need at least 2 clients");
  const auto tree = hac_average_linkage(projected);
  const double threshold = min_leaf_fraction * static_cast<double>(n);
  const auto is_outlier = [&](int node) {
    return static_cast<double>(tree[static_cast<std::size_t>(node)].leaves.size()) < threshold;
  };

  std::vector<int> labels(n, 0);
  std::size_t outliers = 0;
  int current = static_cast<int>(tree.size() - 1);
  while (2 * outliers < n) {
    const auto& node = tree[static_cast<std::size_t>(current)];
    if (node.left < 0)
      break;
    int flagged = -1;
    int next = -1;
    if (is_outlier(node.left)) {
      flagged = node.left;
      next = node.right;
    } else if (is_outlier(node.right)) {
      flagged = node.right;
      next = node.left;
    } else {
      break;
    }
    for (auto leaf : tree[static_cast<std::size_t>(flagged)].leaves) {
      if (labels[leaf] == 0) {
        labels[leaf] = 1;
        ++outliers;
      }
    }
    current = next;
  }
  return labels;
}

FedDmcState::FedDmcState(double alpha)
  : alpha_(alpha)
{
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("FedDmcState: alpha must be in [0, 1]");
}

std::vector<std::size_t> FedDmcState::update(std::span<const int> ids,
                                             std::span<const int> labels)
{
  if (ids.size() != labels.size())
    throw std::invalid_argument("FedDmcState::update: one label per id required");
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::invalid_argument("FedDmcState::update: labels must be 0 or 1");
    auto [it, inserted] = scores_.try_emplace(ids[i], 0.5);
    it->second = alpha_ * it->second + (1.0 - alpha_) * static_cast<double>(labels[i]);
    if (it->second > 0.5)
      flagged.push_back(i);
  }
  return flagged;
}

double FedDmcState::score(int id) const
{
  const auto it = scores_.find(id);
  return it == scores_.end() ? 0.5 : it->second;
}

Verdict feddmc_ensemble(FedDmcState& state, std::span<const int> ids,
                        std::span<const int> labels)
{
  const auto flagged_pos = state.update(ids, labels);
  std::vector<int> flagged;
  for (auto p : flagged_pos)
    flagged.push_back(ids[p]);
  return Verdict::from_flags(ids, flagged, flagged.empty() ? 1 : 2);
}

// LoMar -------------------------------------------------------------------

std::string to_string(LoMarDirection d)
{
  return d == LoMarDirection::flag_below ? "flag_below" : "flag_above";
}

LoMarDirection lomar_direction_from_string(const std::string& s)
{
  if (s == "flag_below")
    return LoMarDirection::flag_below;
  if (s == "flag_above")
    return LoMarDirection::flag_above;
  throw std::invalid_argument("unknown lomar direction '" + s +
                              "' (expected one of: flag_below, flag_above)");
}

void LoMarConfig::validate() const
{
  if (k < 1)
    throw std::invalid_argument("lomar.k must be at least 1");
  if (probe_batch < 1)
    throw std::invalid_argument("lomar.probe_batch must be at least 1");
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("lomar.epsilon must be in (0, 1]");
}

Eigen::MatrixXd lomar_outputs(std::span<const WeightVector> updates, const MlpShape& shape,
                              const Eigen::MatrixXd& probe)
{
  Eigen::MatrixXd out(static_cast<Eigen::Index>(updates.size()),
                      static_cast<Eigen::Index>(shape.classes));
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const MlpModel model(shape, updates[i]);
    out.row(static_cast<Eigen::Index>(i)) = model.predict_proba(probe).colwise().mean();
  }
  return out;
}

std::vector<double> lomar_factors(const Eigen::MatrixXd& outputs, int k)
{
  const auto n = static_cast<std::size_t>(outputs.rows());
  if (k < 1 || n <= static_cast<std::size_t>(k))
    throw std::invalid_argument("lomar: need more clients than neighbors");
  const auto ku = static_cast<std::size_t>(k);
  std::vector<double> factors(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i)
        others.push_back(j);
    const auto row_i = outputs.row(static_cast<Eigen::Index>(i));
    std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
      return (outputs.row(static_cast<Eigen::Index>(a)) - row_i).squaredNorm() <
             (outputs.row(static_cast<Eigen::Index>(b)) - row_i).squaredNorm();
    });
    others.resize(ku);

    double f = 1.0;
    for (Eigen::Index r = 0; r < outputs.cols(); ++r) {
      std::vector<double> nb;
      for (auto j : others)
        nb.push_back(outputs(static_cast<Eigen::Index>(j), r));
      const double self = outputs(static_cast<Eigen::Index>(i), r);
      const double h = silverman_bandwidth(nb);
      double fr = 1.0;
      if (h == 0.0) {
        fr = self == nb.front() ? 1.0 : lomar_divergence_factor;
      } else {
        const auto density = [&](double x) {
          double s = 0.0;
          for (double y : nb)
            s += gaussian_kernel((x - y) / h);
          return s / static_cast<double>(ku);
        };
        double num = 0.0;
        for (double y : nb)
          num += density(y);
        const double den = static_cast<double>(ku) * density(self);
        fr = den > 0.0 ? std::min(num / den, lomar_divergence_factor)
                       : lomar_divergence_factor;
      }
      f *= fr;
    }
    factors[i] = f;
  }
  return factors;
}

std::vector<double> lomar_scores(std::span<const WeightVector> updates,
                                 const MlpShape& shape, const Eigen::MatrixXd& probe,
                                 const LoMarConfig& cfg)
{
  cfg.validate();
  if (updates.size() <= static_cast<std::size_t>(cfg.k))
    throw std::invalid_argument("lomar_scores: need more clients than k");
  return lomar_factors(lomar_outputs(updates, shape, probe), cfg.k);
}

std::vector<std::size_t> lomar_classify(std::span<const double> factors, double epsilon,
                                        LoMarDirection direction)
{
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const bool hit = direction == LoMarDirection::flag_below ? factors[i] < epsilon
                                                             : factors[i] > epsilon;
    if (hit)
      flagged.push_back(i);
  }
  return flagged;
}

} // namespace flaegis
