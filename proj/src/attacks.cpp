#include "flaegis/attacks.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

namespace flaegis {

namespace {

template <typename E>
struct NamedValue {
  E value;
  const char* name;
};

constexpr NamedValue<AttackKind> attack_names[] = {
  { AttackKind::none, "none" },       { AttackKind::label_flip, "label_flip" },
  { AttackKind::lie, "lie" },         { AttackKind::statopt, "statopt" },
  { AttackKind::mimic, "mimic" },     { AttackKind::min_max, "min_max" },
  { AttackKind::min_sum, "min_sum" },
};
constexpr NamedValue<ThetaMode> theta_names[] = {
  { ThetaMode::inverse_unit_mean, "inverse_unit_mean" },
  { ThetaMode::inverse_sign, "inverse_sign" },
  { ThetaMode::inverse_std, "inverse_std" },
};
constexpr NamedValue<ReferenceSet> reference_names[] = {
  { ReferenceSet::malicious, "malicious" },
  { ReferenceSet::benign, "benign" },
};
constexpr NamedValue<StatOptMode> statopt_names[] = {
  { StatOptMode::literal, "literal" },
  { StatOptMode::offset, "offset" },
};

template <typename E, std::size_t N>
std::string name_of(const NamedValue<E> (&table)[N], E v)
{
  for (const auto& e : table)
    if (e.value == v)
      return e.name;
  throw std::invalid_argument("unknown enum value");
}

template <typename E, std::size_t N>
E parse_name(const NamedValue<E> (&table)[N], const std::string& s, const char* what)
{
  for (const auto& e : table)
    if (s == e.name)
      return e.value;
  std::string allowed;
  for (const auto& e : table)
    allowed += std::string(allowed.empty() ? "" : ", ") + e.name;
  throw std::invalid_argument(std::string("unknown ") + what + " '" + s +
                              "' (expected one of: " + allowed + ")");
}

double sign(double x)
{
  return static_cast<double>((x > 0.0) - (x < 0.0));
}

void check_same_dims(std::span<const WeightVector> vs, const char* what)
{
  for (const auto& v : vs) {
    if (v.size() != vs.front().size())
      throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  }
}

std::vector<double> axpy(std::span<const double> base, double gamma,
                         std::span<const double> dir)
{
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    out[i] = base[i] + gamma * dir[i];
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b)
{
  const double d = l2_distance(a, b);
  return d * d;
}

ScaledPerturbation bisect(const MaliciousStats& stats,
                          std::span<const WeightVector> reference, ThetaMode theta_mode,
                          double gamma_max, int steps,
                          const std::function<bool(std::span<const double>,
                                                   std::span<const WeightVector>)>& feasible)
{
  if (reference.size() < 2)
    throw std::invalid_argument("constrained attack: reference set needs at least 2 updates");
  check_same_dims(reference, "constrained attack");
  if (reference.front().size() != stats.mean.size())
    throw std::invalid_argument("constrained attack: reference dimension mismatch");
  if (!(gamma_max > 0.0))
    throw std::invalid_argument("constrained attack: gamma_max must be positive");

  const auto theta = perturbation_direction(stats, theta_mode);
  const auto at = [&](double g) { return axpy(stats.mean.values(), g, theta.values()); };

  double gamma = 0.0;
  if (feasible(at(gamma_max), reference)) {
    gamma = gamma_max;
  } else if (feasible(at(0.0), reference)) {
    double lo = 0.0;
    double hi = gamma_max;
    for (int i = 0; i < steps; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(at(mid), reference))
        lo = mid;
      else
        hi = mid;
    }
    gamma = lo;
  }
  return { gamma, WeightVector(at(gamma)) };
}

} // namespace

void AttackConfig::validate() const
{
  if (!(gamma_max > 0.0))
    throw std::invalid_argument("attack.gamma_max must be positive");
  if (!(gamma > 0.0))
    throw std::invalid_argument("attack.gamma must be positive");
  if (bisection_steps < 1)
    throw std::invalid_argument("attack.bisection_steps must be positive");
  if (kind == AttackKind::mimic && !omniscient)
    throw std::invalid_argument("attack.omniscient must be true for mimic");
  if ((kind == AttackKind::min_max || kind == AttackKind::min_sum) &&
      reference_set == ReferenceSet::benign && !omniscient)
    throw std::invalid_argument(
      "attack.omniscient must be true for a benign reference set");
}

bool AttackConfig::is_model_poisoning() const
{
  return kind != AttackKind::none && kind != AttackKind::label_flip;
}

bool AttackConfig::reads_benign_updates() const
{
  return kind == AttackKind::mimic ||
         ((kind == AttackKind::min_max || kind == AttackKind::min_sum) &&
          reference_set == ReferenceSet::benign);
}

std::string to_string(AttackKind k) { return name_of(attack_names, k); }
AttackKind attack_kind_from_string(const std::string& s)
{
  return parse_name(attack_names, s, "attack kind");
}
std::string to_string(ThetaMode m) { return name_of(theta_names, m); }
ThetaMode theta_mode_from_string(const std::string& s)
{
  return parse_name(theta_names, s, "theta mode");
}
std::string to_string(ReferenceSet r) { return name_of(reference_names, r); }
ReferenceSet reference_set_from_string(const std::string& s)
{
  return parse_name(reference_names, s, "reference set");
}
std::string to_string(StatOptMode m) { return name_of(statopt_names, m); }
StatOptMode statopt_mode_from_string(const std::string& s)
{
  return parse_name(statopt_names, s, "statopt mode");
}

std::vector<int> flip_permutation(int classes, std::uint64_t seed)
{
  if (classes < 2)
    throw std::invalid_argument("flip_labels: need at least 2 classes for a flip");
  std::mt19937_64 rng(seed);
  std::vector<int> perm(static_cast<std::size_t>(classes));
  // Rejection sampling gives a uniform derangement; expected ~e draws.
  for (;;) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    bool fixed = false;
    for (int c = 0; c < classes; ++c)
      fixed = fixed || perm[static_cast<std::size_t>(c)] == c;
    if (!fixed)
      return perm;
  }
}

Dataset flip_labels(const Dataset& ds, std::uint64_t seed)
{
  ds.validate();
  const auto perm = flip_permutation(ds.classes, seed);
  Dataset out = ds;
  for (auto& y : out.labels)
    y = perm[static_cast<std::size_t>(y)];
  return out;
}

MaliciousStats malicious_stats(std::span<const WeightVector> colluders)
{
  if (colluders.empty())
    throw std::invalid_argument("malicious_stats: need at least one colluder");
  check_same_dims(colluders, "malicious_stats");
  const std::size_t p = colluders.front().size();
  const double n = static_cast<double>(colluders.size());
  std::vector<double> mean(p, 0.0);
  for (const auto& c : colluders)
    for (std::size_t i = 0; i < p; ++i)
      mean[i] += c[i];
  for (auto& m : mean)
    m /= n;
  std::vector<double> sd(p, 0.0);
  for (const auto& c : colluders)
    for (std::size_t i = 0; i < p; ++i)
      sd[i] += (c[i] - mean[i]) * (c[i] - mean[i]);
  for (auto& s : sd)
    s = std::sqrt(s / n);
  return { WeightVector(std::move(mean)), WeightVector(std::move(sd)) };
}

double lie_z(int n_total, int n_malicious)
{
  if (n_malicious <= 0 || n_malicious >= n_total)
    throw std::invalid_argument("lie_z: need 0 < malicious < total");
  const int s = n_total / 2 + 1 - n_malicious;
  if (s <= 0)
    throw std::invalid_argument("lie_z: attack infeasible, no supporters needed (s <= 0)");
  const double p = static_cast<double>(n_total - n_malicious - s) /
                   static_cast<double>(n_total - n_malicious);
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("lie_z: quantile argument " + std::to_string(p) +
                                " outside (0, 1)");
  if (n_total - n_malicious - s == s)
    return 0.0;
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

WeightVector lie_attack(const MaliciousStats& stats, double z)
{
  return WeightVector(axpy(stats.mean.values(), z, stats.stddev.values()));
}

WeightVector statopt_attack(const MaliciousStats& stats, double gamma, StatOptMode mode)
{
  if (!(gamma > 0.0))
    throw std::invalid_argument("statopt_attack: gamma must be positive");
  std::vector<double> out(stats.mean.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double omega = -sign(stats.mean[i]);
    out[i] = mode == StatOptMode::literal ? -gamma * omega : stats.mean[i] + gamma * omega;
  }
  return WeightVector(std::move(out));
}

WeightVector mimic_attack(std::span<const ServerUpdate> benign, bool omniscient)
{
  if (!omniscient)
    throw std::invalid_argument("mimic_attack: requires omniscient knowledge");
  if (benign.empty())
    throw std::invalid_argument("mimic_attack: need at least one benign update");
  const ServerUpdate* best = nullptr;
  double best_var = -1.0;
  for (const auto& u : benign) {
    const auto& w = u.weights;
    double var = 0.0;
    if (!w.empty()) {
      const double mean = std::accumulate(w.begin(), w.end(), 0.0) /
                          static_cast<double>(w.size());
      for (double x : w)
        var += (x - mean) * (x - mean);
      var /= static_cast<double>(w.size());
    }
    if (var > best_var || (var == best_var && u.client_id < best->client_id)) {
      best_var = var;
      best = &u;
    }
  }
  return best->weights;
}

WeightVector perturbation_direction(const MaliciousStats& stats, ThetaMode mode)
{
  const std::size_t p = stats.mean.size();
  std::vector<double> theta(p, 0.0);
  const double norm = l2_norm(stats.mean.values());
  if (mode == ThetaMode::inverse_unit_mean && norm == 0.0)
    mode = ThetaMode::inverse_sign;
  for (std::size_t i = 0; i < p; ++i) {
    switch (mode) {
      case ThetaMode::inverse_unit_mean:
        theta[i] = -stats.mean[i] / norm;
        break;
      case ThetaMode::inverse_sign:
        theta[i] = -sign(stats.mean[i]);
        break;
      case ThetaMode::inverse_std:
        theta[i] = -stats.stddev[i];
        break;
    }
  }
  return WeightVector(std::move(theta));
}

bool minmax_feasible(std::span<const double> candidate,
                     std::span<const WeightVector> reference)
{
  double bound = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i)
    for (std::size_t j = i + 1; j < reference.size(); ++j)
      bound = std::max(bound, l2_distance(reference[i].values(), reference[j].values()));
  double worst = 0.0;
  for (const auto& r : reference)
    worst = std::max(worst, l2_distance(candidate, r.values()));
  return worst <= bound;
}

bool minsum_feasible(std::span<const double> candidate,
                     std::span<const WeightVector> reference)
{
  double bound = 0.0;
  for (const auto& ri : reference) {
    double row = 0.0;
    for (const auto& rj : reference)
      row += squared_distance(ri.values(), rj.values());
    bound = std::max(bound, row);
  }
  double total = 0.0;
  for (const auto& r : reference)
    total += squared_distance(candidate, r.values());
  return total <= bound;
}

ScaledPerturbation minmax_attack(const MaliciousStats& stats,
                                 std::span<const WeightVector> reference,
                                 ThetaMode theta_mode, double gamma_max, int bisection_steps)
{
  return bisect(stats, reference, theta_mode, gamma_max, bisection_steps, minmax_feasible);
}

ScaledPerturbation minsum_attack(const MaliciousStats& stats,
                                 std::span<const WeightVector> reference,
                                 ThetaMode theta_mode, double gamma_max, int bisection_steps)
{
  return bisect(stats, reference, theta_mode, gamma_max, bisection_steps, minsum_feasible);
}

WeightVector craft_malicious_update(const AttackConfig& cfg,
                                    std::span<const WeightVector> colluders,
                                    std::span<const ServerUpdate> benign, int n_total)
{
  cfg.validate();
  if (!cfg.is_model_poisoning())
    throw std::invalid_argument("craft_malicious_update: " + to_string(cfg.kind) +
                                " is not a model-poisoning attack");
  if (cfg.kind == AttackKind::mimic)
    return mimic_attack(benign, cfg.omniscient);

  const auto stats = malicious_stats(colluders);
  switch (cfg.kind) {
    case AttackKind::lie:
      return lie_attack(stats, lie_z(n_total, static_cast<int>(colluders.size())));
    case AttackKind::statopt:
      return statopt_attack(stats, cfg.gamma, cfg.statopt_mode);
    case AttackKind::min_max:
    case AttackKind::min_sum: {
      std::vector<WeightVector> reference;
      if (cfg.reference_set == ReferenceSet::benign) {
        for (const auto& u : benign)
          reference.push_back(u.weights);
      } else {
        reference.assign(colluders.begin(), colluders.end());
      }
      // A lone colluder has no dispersion to hide in.
      if (reference.size() < 2)
        return stats.mean;
      const auto r = cfg.kind == AttackKind::min_max
                       ? minmax_attack(stats, reference, cfg.theta_mode, cfg.gamma_max,
                                       cfg.bisection_steps)
                       : minsum_attack(stats, reference, cfg.theta_mode, cfg.gamma_max,
                                       cfg.bisection_steps);
      return r.update;
    }
    default:
      break;
  }
  throw std::logic_error("craft_malicious_update: unhandled attack kind");
}

} // namespace flaegis
