#include "flaegis/sim.hpp"

#include "flaegis/log.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace flaegis {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index
/// writes only its own slot, so the result does not depend on scheduling.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& body)
{
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure)
            failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool)
    t.join();
  if (failure)
    std::rethrow_exception(failure);
}

Dataset load_pool(const ExperimentConfig& cfg)
{
  const RngSeed seed{ cfg.seed };
  if (!cfg.data.csv_path.empty())
    return load_csv(cfg.data.csv_path, cfg.data.classes);
  return synth_dataset(derive_seed(seed, 0, 0, Purpose::data), cfg.data.samples,
                       cfg.data.dim, cfg.data.classes, cfg.data.cluster_spread,
                       cfg.data.center_scale);
}

} // namespace

void ExperimentConfig::validate() const
{
  if (clients < 2)
    throw std::invalid_argument("clients must be at least 2");
  if (rounds < 0)
    throw std::invalid_argument("rounds must be non-negative");
  if (!(malicious_fraction >= 0.0 && malicious_fraction < 0.5))
    throw std::invalid_argument("malicious_fraction must be in [0, 0.5)");
  if (warmup < 0)
    throw std::invalid_argument("warmup must be non-negative");
  if (threads < 1)
    throw std::invalid_argument("threads must be at least 1");
  if (data.classes < 1 || data.dim < 1 || data.samples < 1)
    throw std::invalid_argument("data: samples, dim and classes must be positive");
  if (!(data.cluster_spread >= 0.0) || !(data.center_scale >= 0.0))
    throw std::invalid_argument("data.cluster_spread and data.center_scale must be non-negative");
  if (!(data.dirichlet_alpha > 0.0))
    throw std::invalid_argument("data.dirichlet_alpha must be positive");
  if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0))
    throw std::invalid_argument("data.test_fraction must be in (0, 1)");
  for (auto h : learner.hidden) {
    if (h == 0)
      throw std::invalid_argument("learner.hidden sizes must be positive");
  }
  learner.train.validate();
  attack.validate();
  defense_settings.detect.validate();
  defense_settings.fft.validate();
  defense_settings.signguard.validate();
  defense_settings.feddmc.validate();
  defense_settings.lomar.validate();
  if (attack.kind == AttackKind::label_flip && data.classes < 2)
    throw std::invalid_argument("label_flip needs at least 2 classes");
}

int ExperimentConfig::malicious_count() const
{
  if (attack.kind == AttackKind::none)
    return 0;
  return static_cast<int>(std::floor(malicious_fraction * clients + 1e-9));
}

double detection_accuracy(std::span<const int> participants, std::span<const int> flagged,
                          std::span<const int> truly_malicious)
{
  if (participants.empty())
    return 0.0;
  std::size_t correct = 0;
  for (int id : participants) {
    const bool f = std::find(flagged.begin(), flagged.end(), id) != flagged.end();
    const bool m = std::find(truly_malicious.begin(), truly_malicious.end(), id) !=
                   truly_malicious.end();
    if (f == m)
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(participants.size());
}

Simulation::Simulation(ExperimentConfig cfg)
  : cfg_(std::move(cfg))
{
  cfg_.validate();
  const RngSeed seed{ cfg_.seed };
  const Dataset pool = load_pool(cfg_);
  if (pool.dim() != cfg_.data.dim)
    throw std::invalid_argument("data.dim does not match the dataset");
  auto [train, test] =
    split_holdout(pool, cfg_.data.test_fraction, derive_seed(seed, 0, 0, Purpose::holdout));
  test_ = std::move(test);
  clients_ = dirichlet_partition(train, static_cast<std::size_t>(cfg_.clients),
                                 cfg_.data.dirichlet_alpha,
                                 derive_seed(seed, 0, 0, Purpose::partition));

  learner_.shape = MlpShape{ cfg_.data.dim, cfg_.learner.hidden,
                             static_cast<std::size_t>(pool.classes) };
  learner_.probe = probe_inputs(pool, static_cast<std::size_t>(cfg_.defense_settings.lomar.probe_batch),
                                derive_seed(seed, 0, 0, Purpose::probe));
  defense_ = make_defense(cfg_.defense, cfg_.defense_settings, learner_);
  global_ = MlpModel::initialize(learner_.shape, derive_seed(seed, 0, 0, Purpose::model_init))
              .params();
}

Simulation::~Simulation() = default;

double Simulation::current_accuracy() const
{
  return evaluate(MlpModel(learner_.shape, global_), test_);
}

std::vector<int> Simulation::malicious_ids(int round) const
{
  const int m = cfg_.malicious_count();
  std::vector<int> ids(static_cast<std::size_t>(cfg_.clients));
  std::iota(ids.begin(), ids.end(), 0);
  const int draw_round = cfg_.resample_malicious ? round : 0;
  std::mt19937_64 rng(derive_seed(RngSeed{ cfg_.seed }, draw_round, -1, Purpose::malicious_draw));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(m));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<ClientUpdate> Simulation::client_updates(int round,
                                                     std::span<const int> malicious) const
{
  const RngSeed seed{ cfg_.seed };
  const auto k = static_cast<std::size_t>(cfg_.clients);
  const MlpModel model(learner_.shape, global_);
  const bool flips = cfg_.attack.kind == AttackKind::label_flip;
  const auto is_malicious = [&](int id) {
    return std::binary_search(malicious.begin(), malicious.end(), id);
  };

  std::vector<WeightVector> trained(k);
  parallel_for(k, cfg_.threads, [&](std::size_t i) {
    const int id = static_cast<int>(i);
    const auto train_seed = derive_seed(seed, round, id, Purpose::local_train);
    if (flips && is_malicious(id)) {
      const auto flipped = flip_labels(clients_[i], derive_seed(seed, 0, id, Purpose::label_flip));
      trained[i] = local_train(model, flipped, cfg_.learner.train, train_seed);
    } else {
      trained[i] = local_train(model, clients_[i], cfg_.learner.train, train_seed);
    }
  });

  std::vector<ClientUpdate> updates;
  updates.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const int id = static_cast<int>(i);
    updates.push_back({ id, trained[i], is_malicious(id) });
  }

  if (cfg_.attack.is_model_poisoning() && !malicious.empty()) {
    std::vector<WeightVector> colluders;
    std::vector<ServerUpdate> benign;
    for (const auto& u : updates) {
      if (u.ground_truth_malicious)
        colluders.push_back(u.weights);
      else if (cfg_.attack.omniscient)
        benign.push_back({ u.client_id, u.weights });
    }
    const auto poisoned =
      craft_malicious_update(cfg_.attack, colluders, benign, cfg_.clients);
    for (auto& u : updates)
      if (u.ground_truth_malicious)
        u.weights = poisoned;
  }
  return updates;
}

RoundReport Simulation::run_round(int round)
{
  RoundReport report;
  report.round = round;
  report.true_malicious_ids = malicious_ids(round);

  auto t0 = Clock::now();
  const auto updates = client_updates(round, report.true_malicious_ids);
  report.times.train_ms = ms_since(t0);

  const auto view = server_view(updates);
  std::vector<int> participants;
  std::vector<double> counts;
  for (const auto& u : view) {
    participants.push_back(u.client_id);
    counts.push_back(static_cast<double>(clients_[static_cast<std::size_t>(u.client_id)].size()));
  }
  RoundInput input;
  input.round = round;
  input.global = &global_;
  input.updates = view;
  input.sample_counts = counts;
  input.seed = derive_seed(RngSeed{ cfg_.seed }, round, -1, Purpose::detect);

  t0 = Clock::now();
  const Verdict verdict = defense_->identify(input);
  report.times.detect_ms = ms_since(t0);
  report.flagged_ids = verdict.flagged_ids;
  report.estimated_clusters = verdict.estimated_clusters;

  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < view.size(); ++i)
    if (!verdict.is_flagged(view[i].client_id))
      accepted.push_back(i);
  if (accepted.empty()) {
    report.all_flagged_fallback = true;
    log(LogLevel::info, "round " + std::to_string(round) +
                          ": every client flagged, aggregating all updates");
    accepted.resize(view.size());
    std::iota(accepted.begin(), accepted.end(), std::size_t{ 0 });
  }

  t0 = Clock::now();
  global_ = defense_->aggregate(input, accepted);
  report.times.aggregate_ms = ms_since(t0);

  t0 = Clock::now();
  report.model_accuracy = current_accuracy();
  report.times.evaluate_ms = ms_since(t0);

  report.detection_accuracy =
    detection_accuracy(participants, report.flagged_ids, report.true_malicious_ids);
  log(LogLevel::debug, "round " + std::to_string(round) + " detection " +
                         std::to_string(report.detection_accuracy) + " accuracy " +
                         std::to_string(report.model_accuracy) + " flagged " +
                         std::to_string(report.flagged_ids.size()));
  return report;
}

ExperimentReport Simulation::run()
{
  ExperimentReport r;
  r.config = cfg_;
  r.initial_accuracy = current_accuracy();
  r.final_accuracy = r.initial_accuracy;
  try {
    for (int round = 0; round < cfg_.rounds; ++round) {
      r.rounds.push_back(run_round(round));
      r.final_accuracy = r.rounds.back().model_accuracy;
    }
  } catch (const std::exception& e) {
    r.valid = false;
    r.error = e.what();
    log(LogLevel::error, std::string("experiment aborted: ") + e.what());
  }

  std::vector<double> det;
  for (const auto& rr : r.rounds)
    if (rr.round >= cfg_.warmup)
      det.push_back(rr.detection_accuracy);
  if (det.empty())
    for (const auto& rr : r.rounds)
      det.push_back(rr.detection_accuracy);
  if (!det.empty())
    r.mean_detection_accuracy =
      std::accumulate(det.begin(), det.end(), 0.0) / static_cast<double>(det.size());
  return r;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg)
{
  Simulation sim(cfg);
  return sim.run();
}

std::vector<AblationCell> ablation_suite(const ExperimentConfig& base,
                                         std::span<const AttackKind> attacks,
                                         std::span<const double> fractions)
{
  static constexpr DefenseKind variants[] = { DefenseKind::flaegis, DefenseKind::flaegis_no_sax,
                                              DefenseKind::flaegis_no_fft };
  std::vector<AblationCell> cells;
  for (auto attack : attacks) {
    for (double fraction : fractions) {
      for (auto defense : variants) {
        ExperimentConfig cfg = base;
        cfg.defense = defense;
        cfg.attack.kind = attack;
        if (attack == AttackKind::mimic)
          cfg.attack.omniscient = true;
        cfg.malicious_fraction = fraction;
        cells.push_back({ defense, attack, fraction, run_experiment(cfg) });
      }
    }
  }
  return cells;
}

} // namespace flaegis
