#include "flaegis/config.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace flaegis {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

/// Reads one JSON object, tracking the dotted path for diagnostics and
/// rejecting keys nobody asked for.
class ObjectReader {
public:
  ObjectReader(const json& j, std::string path)
    : j_(j)
    , path_(std::move(path))
  {
    if (!j_.is_object())
      throw ConfigError(path_, "expected an object");
  }

  std::string field(const std::string& key) const
  {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key)
  {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T required(const std::string& key)
  {
    if (!j_.contains(key))
      throw ConfigError(field(key), "missing required field");
    return convert<T>(key);
  }

  template <typename T>
  void optional(const std::string& key, T& out)
  {
    if (j_.contains(key))
      out = convert<T>(key);
  }

  ObjectReader child(const std::string& key)
  {
    seen_.insert(key);
    return ObjectReader(j_.at(key), field(key));
  }

  void finish() const
  {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key))
        throw ConfigError(field(key), "unknown field");
    }
  }

private:
  template <typename T>
  T convert(const std::string& key)
  {
    seen_.insert(key);
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean())
          throw ConfigError(field(key), "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer())
          throw ConfigError(field(key), "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError(field(key), "expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number())
          throw ConfigError(field(key), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string())
          throw ConfigError(field(key), "expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E, typename Parse>
void optional_enum(ObjectReader& r, const std::string& key, E& out, Parse parse)
{
  if (!r.has(key))
    return;
  const auto s = r.required<std::string>(key);
  try {
    out = parse(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.field(key), e.what());
  }
}

AttackConfig attack_from(ObjectReader r)
{
  AttackConfig a;
  const auto kind = r.required<std::string>("kind");
  try {
    a.kind = attack_kind_from_string(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.field("kind"), e.what());
  }
  r.optional("gamma_max", a.gamma_max);
  r.optional("gamma", a.gamma);
  optional_enum(r, "theta_mode", a.theta_mode, theta_mode_from_string);
  optional_enum(r, "reference_set", a.reference_set, reference_set_from_string);
  r.optional("omniscient", a.omniscient);
  optional_enum(r, "statopt_mode", a.statopt_mode, statopt_mode_from_string);
  r.optional("bisection_steps", a.bisection_steps);
  r.finish();
  return a;
}

void data_from(ObjectReader r, DataConfig& d)
{
  r.optional("samples", d.samples);
  r.optional("dim", d.dim);
  r.optional("classes", d.classes);
  r.optional("cluster_spread", d.cluster_spread);
  r.optional("center_scale", d.center_scale);
  r.optional("dirichlet_alpha", d.dirichlet_alpha);
  r.optional("test_fraction", d.test_fraction);
  r.optional("csv", d.csv_path);
  r.finish();
}

void learner_from(ObjectReader r, LearnerConfig& l)
{
  r.optional("hidden", l.hidden);
  r.optional("epochs", l.train.epochs);
  r.optional("batch_size", l.train.batch_size);
  r.optional("learning_rate", l.train.learning_rate);
  r.optional("beta1", l.train.beta1);
  r.optional("beta2", l.train.beta2);
  r.optional("epsilon", l.train.epsilon);
  if (r.has("paper_architecture"))
    (void)r.required<std::string>("paper_architecture");
  r.finish();
}

void detect_from(ObjectReader r, DefenseSettings& s)
{
  r.optional("bands", s.detect.sax.bands);
  r.optional("paa_window", s.detect.sax.paa_window);
  optional_enum(r, "range_mode", s.detect.sax.range_mode, range_mode_from_string);
  r.optional("use_sax", s.detect.use_sax);
  optional_enum(r, "centering", s.detect.centering, centering_from_string);
  r.optional("k_max", s.detect.k_max);
  optional_enum(r, "kmeans_input", s.detect.kmeans_input, kmeans_input_from_string);
  r.optional("embedding_dims", s.detect.embedding_dims);
  r.optional("kmeans_max_iter", s.detect.kmeans_max_iter);
  r.optional("kmeans_tol", s.detect.kmeans_tol);
  optional_enum(r, "input", s.detect_input, detect_input_from_string);
  r.finish();
}

void aggregate_from(ObjectReader r, DefenseSettings& s)
{
  r.optional("grid_bins", s.fft.grid_bins);
  r.optional("padding_bandwidths", s.fft.padding_bandwidths);
  r.optional("weighted_fedavg", s.weighted_fedavg);
  r.finish();
}

void signguard_from(ObjectReader r, SignGuardConfig& c)
{
  r.optional("lower", c.lower);
  r.optional("upper", c.upper);
  r.optional("meanshift_bandwidth", c.meanshift_bandwidth);
  r.finish();
}

void feddmc_from(ObjectReader r, FedDmcConfig& c)
{
  r.optional("pca_dims", c.pca_dims);
  r.optional("min_leaf_fraction", c.min_leaf_fraction);
  r.optional("alpha", c.alpha);
  r.finish();
}

void lomar_from(ObjectReader r, LoMarConfig& c)
{
  r.optional("k", c.k);
  r.optional("probe_batch", c.probe_batch);
  r.optional("epsilon", c.epsilon);
  optional_enum(r, "direction", c.direction, lomar_direction_from_string);
  r.finish();
}

/// Maps validation failures (std::invalid_argument messages start with the
/// dotted field path where one exists) onto ConfigError.
void validate_experiment(const ExperimentConfig& cfg)
{
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto end = msg.find_first_of(" :");
    const std::string head = msg.substr(0, end);
    const bool looks_like_field = head.find('.') != std::string::npos ||
                                  head == "clients" || head == "rounds" ||
                                  head == "malicious_fraction" || head == "warmup" ||
                                  head == "threads";
    throw ConfigError(looks_like_field ? head : "", msg);
  }
}

} // namespace

std::string format_double(double x)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

ordered_json to_json(const ExperimentConfig& c)
{
  const auto& s = c.defense_settings;
  ordered_json j;
  j["seed"] = c.seed;
  j["clients"] = c.clients;
  j["rounds"] = c.rounds;
  j["malicious_fraction"] = c.malicious_fraction;
  j["resample_malicious"] = c.resample_malicious;
  j["warmup"] = c.warmup;
  j["threads"] = c.threads;
  j["include_timing"] = c.include_timing;
  j["defense"] = to_string(c.defense);
  j["attack"] = {
    { "kind", to_string(c.attack.kind) },
    { "gamma_max", c.attack.gamma_max },
    { "gamma", c.attack.gamma },
    { "theta_mode", to_string(c.attack.theta_mode) },
    { "reference_set", to_string(c.attack.reference_set) },
    { "omniscient", c.attack.omniscient },
    { "statopt_mode", to_string(c.attack.statopt_mode) },
    { "bisection_steps", c.attack.bisection_steps },
  };
  j["data"] = {
    { "samples", c.data.samples },
    { "dim", c.data.dim },
    { "classes", c.data.classes },
    { "cluster_spread", c.data.cluster_spread },
    { "center_scale", c.data.center_scale },
    { "dirichlet_alpha", c.data.dirichlet_alpha },
    { "test_fraction", c.data.test_fraction },
    { "csv", c.data.csv_path },
  };
  j["learner"] = {
    { "hidden", c.learner.hidden },
    { "epochs", c.learner.train.epochs },
    { "batch_size", c.learner.train.batch_size },
    { "learning_rate", c.learner.train.learning_rate },
    { "beta1", c.learner.train.beta1 },
    { "beta2", c.learner.train.beta2 },
    { "epsilon", c.learner.train.epsilon },
    { "paper_architecture", paper_architecture },
  };
  j["detect"] = {
    { "input", to_string(s.detect_input) },
    { "bands", s.detect.sax.bands },
    { "paa_window", s.detect.sax.paa_window },
    { "range_mode", to_string(s.detect.sax.range_mode) },
    { "use_sax", s.detect.use_sax },
    { "centering", to_string(s.detect.centering) },
    { "k_max", s.detect.k_max },
    { "kmeans_input", to_string(s.detect.kmeans_input) },
    { "embedding_dims", s.detect.embedding_dims },
    { "kmeans_max_iter", s.detect.kmeans_max_iter },
    { "kmeans_tol", s.detect.kmeans_tol },
  };
  j["aggregate"] = {
    { "grid_bins", s.fft.grid_bins },
    { "padding_bandwidths", s.fft.padding_bandwidths },
    { "weighted_fedavg", s.weighted_fedavg },
  };
  j["signguard"] = {
    { "lower", s.signguard.lower },
    { "upper", s.signguard.upper },
    { "meanshift_bandwidth", s.signguard.meanshift_bandwidth },
  };
  j["feddmc"] = {
    { "pca_dims", s.feddmc.pca_dims },
    { "min_leaf_fraction", s.feddmc.min_leaf_fraction },
    { "alpha", s.feddmc.alpha },
  };
  j["lomar"] = {
    { "k", s.lomar.k },
    { "probe_batch", s.lomar.probe_batch },
    { "epsilon", s.lomar.epsilon },
    { "direction", to_string(s.lomar.direction) },
  };
  return j;
}

ExperimentConfig experiment_from_json(const json& j)
{
  ExperimentConfig c;
  ObjectReader r(j, "");
  r.optional("seed", c.seed);
  r.optional("clients", c.clients);
  r.optional("rounds", c.rounds);
  r.optional("malicious_fraction", c.malicious_fraction);
  r.optional("resample_malicious", c.resample_malicious);
  r.optional("warmup", c.warmup);
  r.optional("threads", c.threads);
  r.optional("include_timing", c.include_timing);
  {
    const auto d = r.required<std::string>("defense");
    try {
      c.defense = defense_kind_from_string(d);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("defense", e.what());
    }
  }
  if (!r.has("attack"))
    throw ConfigError("attack", "missing required field");
  c.attack = attack_from(r.child("attack"));
  if (r.has("data"))
    data_from(r.child("data"), c.data);
  if (r.has("learner"))
    learner_from(r.child("learner"), c.learner);
  if (r.has("detect"))
    detect_from(r.child("detect"), c.defense_settings);
  if (r.has("aggregate"))
    aggregate_from(r.child("aggregate"), c.defense_settings);
  if (r.has("signguard"))
    signguard_from(r.child("signguard"), c.defense_settings.signguard);
  if (r.has("feddmc"))
    feddmc_from(r.child("feddmc"), c.defense_settings.feddmc);
  if (r.has("lomar"))
    lomar_from(r.child("lomar"), c.defense_settings.lomar);
  if (r.has("grid"))
    (void)r.raw("grid");
  r.finish();
  validate_experiment(c);
  return c;
}

ordered_json to_json(const SweepGrid& g)
{
  ordered_json j;
  j["defenses"] = ordered_json::array();
  for (auto d : g.defenses)
    j["defenses"].push_back(to_string(d));
  j["attacks"] = ordered_json::array();
  for (auto a : g.attacks)
    j["attacks"].push_back(to_string(a));
  j["fractions"] = g.fractions;
  return j;
}

SweepGrid grid_from_json(const json& j)
{
  ObjectReader r(j, "grid");
  SweepGrid g;
  std::vector<std::string> defenses;
  std::vector<std::string> attacks;
  r.optional("defenses", defenses);
  r.optional("attacks", attacks);
  r.optional("fractions", g.fractions);
  r.finish();
  for (std::size_t i = 0; i < defenses.size(); ++i) {
    try {
      g.defenses.push_back(defense_kind_from_string(defenses[i]));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("grid.defenses[" + std::to_string(i) + "]", e.what());
    }
  }
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    try {
      g.attacks.push_back(attack_kind_from_string(attacks[i]));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("grid.attacks[" + std::to_string(i) + "]", e.what());
    }
  }
  for (std::size_t i = 0; i < g.fractions.size(); ++i) {
    if (!(g.fractions[i] >= 0.0 && g.fractions[i] < 0.5))
      throw ConfigError("grid.fractions[" + std::to_string(i) + "]",
                        "fraction must be in [0, 0.5)");
  }
  return g;
}

ConfigDocument parse_config(const std::string& text)
{
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  ConfigDocument doc;
  doc.experiment = experiment_from_json(j);
  if (j.is_object() && j.contains("grid"))
    doc.grid = grid_from_json(j.at("grid"));
  return doc;
}

ConfigDocument load_config(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("", "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ordered_json to_json(const RoundReport& r, bool include_timing)
{
  ordered_json j;
  j["round"] = r.round;
  j["detection_accuracy"] = r.detection_accuracy;
  j["model_accuracy"] = r.model_accuracy;
  j["estimated_clusters"] = r.estimated_clusters;
  j["flagged_ids"] = r.flagged_ids;
  j["true_malicious_ids"] = r.true_malicious_ids;
  j["all_flagged_fallback"] = r.all_flagged_fallback;
  if (include_timing) {
    j["wall_ms"] = {
      { "train", r.times.train_ms },
      { "detect", r.times.detect_ms },
      { "aggregate", r.times.aggregate_ms },
      { "evaluate", r.times.evaluate_ms },
    };
  } else {
    j["wall_ms"] = nullptr;
  }
  return j;
}

ordered_json to_json(const ExperimentReport& r)
{
  ordered_json j;
  j["config"] = to_json(r.config);
  j["valid"] = r.valid;
  j["error"] = r.error.empty() ? ordered_json(nullptr) : ordered_json(r.error);
  j["initial_accuracy"] = r.initial_accuracy;
  j["final_accuracy"] = r.final_accuracy;
  j["mean_detection_accuracy"] =
    r.mean_detection_accuracy ? ordered_json(*r.mean_detection_accuracy) : ordered_json(nullptr);
  j["rounds"] = ordered_json::array();
  for (const auto& rr : r.rounds)
    j["rounds"].push_back(to_json(rr, r.config.include_timing));
  return j;
}

void write_rounds_csv(std::ostream& out, const ExperimentReport& r)
{
  out << rounds_csv_header << '\n';
  for (const auto& rr : r.rounds) {
    out << rr.round << ',' << to_string(r.config.defense) << ','
        << to_string(r.config.attack.kind) << ',' << format_double(r.config.malicious_fraction)
        << ',' << format_double(rr.detection_accuracy) << ','
        << format_double(rr.model_accuracy) << ',' << rr.flagged_ids.size() << ','
        << rr.true_malicious_ids.size() << ',' << format_double(rr.times.total()) << '\n';
  }
}

void write_report_files(const std::filesystem::path& dir, const ExperimentReport& r)
{
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "rounds.csv");
    write_rounds_csv(csv, r);
    if (!csv)
      throw std::runtime_error("cannot write " + (dir / "rounds.csv").string());
  }
  // report.json last: its presence marks a completed run.
  const auto tmp = dir / "report.json.tmp";
  {
    std::ofstream js(tmp);
    js << to_json(r).dump(2) << '\n';
    if (!js)
      throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / "report.json");
}

} // namespace flaegis
