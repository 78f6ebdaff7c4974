#include "flaegis/defense.hpp"

#include <algorithm>
#include <utility>

namespace flaegis {

namespace {

constexpr std::pair<DefenseKind, const char*> defense_names[] = {
  { DefenseKind::fedavg, "fedavg" },
  { DefenseKind::flaegis, "flaegis" },
  { DefenseKind::flaegis_no_sax, "flaegis_no_sax" },
  { DefenseKind::flaegis_no_fft, "flaegis_no_fft" },
  { DefenseKind::signguard, "signguard" },
  { DefenseKind::signguard_fft, "signguard_fft" },
  { DefenseKind::feddmc, "feddmc" },
  { DefenseKind::feddmc_fft, "feddmc_fft" },
  { DefenseKind::lomar, "lomar" },
  { DefenseKind::lomar_fft, "lomar_fft" },
  { DefenseKind::fft_only, "fft_only" },
};

std::vector<int> ids_of(std::span<const ServerUpdate> updates)
{
  std::vector<int> ids;
  ids.reserve(updates.size());
  for (const auto& u : updates)
    ids.push_back(u.client_id);
  return ids;
}

std::vector<WeightVector> weights_of(std::span<const ServerUpdate> updates)
{
  std::vector<WeightVector> w;
  w.reserve(updates.size());
  for (const auto& u : updates)
    w.push_back(u.weights);
  return w;
}

std::vector<WeightVector> select(std::span<const ServerUpdate> updates,
                                 std::span<const std::size_t> accepted)
{
  std::vector<WeightVector> w;
  w.reserve(accepted.size());
  for (auto k : accepted)
    w.push_back(updates[k].weights);
  return w;
}

/// Pseudo-gradients g_k = global - w_k, so that w_k = global - g_k.
std::vector<WeightVector> pseudo_gradients(const RoundInput& in)
{
  std::vector<WeightVector> grads;
  grads.reserve(in.updates.size());
  for (const auto& u : in.updates) {
    std::vector<double> g(u.weights.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = (*in.global)[i] - u.weights[i];
    grads.emplace_back(std::move(g));
  }
  return grads;
}

Verdict verdict_from_positions(std::span<const ServerUpdate> updates,
                               std::span<const std::size_t> flagged_pos)
{
  const auto ids = ids_of(updates);
  std::vector<int> flagged;
  for (auto p : flagged_pos)
    flagged.push_back(ids[p]);
  return Verdict::from_flags(ids, flagged, flagged.empty() ? 1 : 2);
}

class StandardDefense : public Defense {
public:
  StandardDefense(DefenseKind kind, DefenseSettings settings, LearnerContext learner)
    : kind_(kind)
    , settings_(std::move(settings))
    , learner_(std::move(learner))
    , feddmc_state_(settings_.feddmc.alpha)
  {
    settings_.detect.validate();
    settings_.fft.validate();
    settings_.signguard.validate();
    settings_.feddmc.validate();
    settings_.lomar.validate();
  }

  DefenseKind kind() const override { return kind_; }

  Verdict identify(const RoundInput& in) override
  {
    switch (kind_) {
      case DefenseKind::fedavg:
      case DefenseKind::fft_only:
        return Verdict::all_benign(ids_of(in.updates));
      case DefenseKind::flaegis:
      case DefenseKind::flaegis_no_fft:
      case DefenseKind::flaegis_no_sax:
        return identify_flaegis(in);
      case DefenseKind::signguard:
      case DefenseKind::signguard_fft:
        return identify_signguard(in);
      case DefenseKind::feddmc:
      case DefenseKind::feddmc_fft:
        return identify_feddmc(in);
      case DefenseKind::lomar:
      case DefenseKind::lomar_fft:
        return identify_lomar(in);
    }
    throw std::logic_error("identify: unhandled defense");
  }

  WeightVector aggregate(const RoundInput& in, std::span<const std::size_t> accepted) override
  {
    if (accepted.empty())
      throw std::invalid_argument("aggregate: no accepted updates");
    switch (kind_) {
      case DefenseKind::flaegis:
      case DefenseKind::flaegis_no_sax:
      case DefenseKind::signguard_fft:
      case DefenseKind::feddmc_fft:
      case DefenseKind::lomar_fft:
      case DefenseKind::fft_only:
        return fft_aggregate(select(in.updates, accepted), settings_.fft);
      case DefenseKind::signguard: {
        const auto grads = pseudo_gradients(in);
        const auto g = signguard_aggregate(grads, accepted, median_norm(grads));
        std::vector<double> w(g.size());
        for (std::size_t i = 0; i < w.size(); ++i)
          w[i] = (*in.global)[i] - g[i];
        return WeightVector(std::move(w));
      }
      case DefenseKind::fedavg:
      case DefenseKind::flaegis_no_fft:
      case DefenseKind::feddmc:
      case DefenseKind::lomar:
        break;
    }
    const auto chosen = select(in.updates, accepted);
    if (settings_.weighted_fedavg && in.sample_counts.size() == in.updates.size()) {
      std::vector<double> counts;
      for (auto k : accepted)
        counts.push_back(in.sample_counts[k]);
      return fedavg(chosen, counts);
    }
    return fedavg(chosen);
  }

private:
  Verdict identify_flaegis(const RoundInput& in) const
  {
    DetectConfig cfg = settings_.detect;
    cfg.use_sax = kind_ != DefenseKind::flaegis_no_sax && settings_.detect.use_sax;
    if (settings_.detect_input == DetectInput::weights)
      return flaegis_identify(in.updates, cfg, in.seed);
    std::vector<ServerUpdate> deltas;
    deltas.reserve(in.updates.size());
    for (const auto& u : in.updates) {
      std::vector<double> d(u.weights.size());
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = u.weights[i] - (*in.global)[i];
      deltas.push_back({ u.client_id, WeightVector(std::move(d)) });
    }
    return flaegis_identify(deltas, cfg, in.seed);
  }

  Verdict identify_signguard(const RoundInput& in) const
  {
    const auto grads = pseudo_gradients(in);
    const auto by_norm = signguard_norm_filter(grads, settings_.signguard);
    const auto by_sign = signguard_sign_filter(grads, settings_.signguard);
    std::vector<std::size_t> flagged;
    for (std::size_t k = 0; k < grads.size(); ++k) {
      const bool ok = std::binary_search(by_norm.begin(), by_norm.end(), k) &&
                      std::binary_search(by_sign.begin(), by_sign.end(), k);
      if (!ok)
        flagged.push_back(k);
    }
    return verdict_from_positions(in.updates, flagged);
  }

  Verdict identify_feddmc(const RoundInput& in)
  {
    const auto w = weights_of(in.updates);
    const auto projected = feddmc_project(w, settings_.feddmc.pca_dims);
    const auto labels = feddmc_tree_detect(projected, settings_.feddmc.min_leaf_fraction);
    return feddmc_ensemble(feddmc_state_, ids_of(in.updates), labels);
  }

  Verdict identify_lomar(const RoundInput& in) const
  {
    const auto w = weights_of(in.updates);
    const auto factors = lomar_scores(w, learner_.shape, learner_.probe, settings_.lomar);
    const auto flagged =
      lomar_classify(factors, settings_.lomar.epsilon, settings_.lomar.direction);
    return verdict_from_positions(in.updates, flagged);
  }

  DefenseKind kind_;
  DefenseSettings settings_;
  LearnerContext learner_;
  FedDmcState feddmc_state_;
};

} // namespace

std::string to_string(DefenseKind k)
{
  for (const auto& [kind, name] : defense_names)
    if (kind == k)
      return name;
  throw std::invalid_argument("unknown defense kind");
}

DefenseKind defense_kind_from_string(const std::string& s)
{
  if (s == "none")
    return DefenseKind::fedavg;
  for (const auto& [kind, name] : defense_names)
    if (s == name)
      return kind;
  std::string allowed = "none";
  for (const auto& [kind, name] : defense_names)
    allowed += std::string(", ") + name;
  throw std::invalid_argument("unknown defense '" + s + "' (expected one of: " + allowed + ")");
}

const std::vector<DefenseKind>& all_defense_kinds()
{
  static const std::vector<DefenseKind> kinds = [] {
    std::vector<DefenseKind> k;
    for (const auto& [kind, name] : defense_names)
      k.push_back(kind);
    return k;
  }();
  return kinds;
}

std::string to_string(DetectInput d)
{
  return d == DetectInput::weights ? "weights" : "update";
}

DetectInput detect_input_from_string(const std::string& s)
{
  if (s == "weights")
    return DetectInput::weights;
  if (s == "update")
    return DetectInput::update;
  throw std::invalid_argument("unknown detect input '" + s +
                              "' (expected one of: weights, update)");
}

std::unique_ptr<Defense> make_defense(DefenseKind kind, const DefenseSettings& settings,
                                      const LearnerContext& learner)
{
  return std::make_unique<StandardDefense>(kind, settings, learner);
}

} // namespace flaegis
