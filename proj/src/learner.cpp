#include "flaegis/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace flaegis {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

struct LayerView {
  std::size_t in;
  std::size_t out;
  std::size_t weight_offset;
  std::size_t bias_offset;
};

std::vector<LayerView> layer_views(const MlpShape& shape)
{
  std::vector<LayerView> views;
  std::size_t in = shape.input;
  std::size_t offset = 0;
  auto add = [&](std::size_t out) {
    views.push_back({ in, out, offset, offset + in * out });
    offset += in * out + out;
    in = out;
  };
  for (auto h : shape.hidden)
    add(h);
  add(shape.classes);
  return views;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z)
{
  Eigen::MatrixXd p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

struct ForwardTrace {
  std::vector<Eigen::MatrixXd> activations; // input, hidden..., (no output)
  std::vector<Eigen::MatrixXd> pre;         // pre-activation per layer
  Eigen::MatrixXd probs;
};

ForwardTrace forward(const MlpShape& shape, std::span<const double> params,
                     const Eigen::MatrixXd& x)
{
  if (static_cast<std::size_t>(x.cols()) != shape.input)
    throw std::invalid_argument("MlpModel: input dimension " + std::to_string(x.cols()) +
                                " does not match model input " +
                                std::to_string(shape.input));
  const auto views = layer_views(shape);
  ForwardTrace t;
  t.activations.push_back(x);
  for (std::size_t l = 0; l < views.size(); ++l) {
    const auto& v = views[l];
    ConstRowMap w(params.data() + v.weight_offset, static_cast<Eigen::Index>(v.out),
                  static_cast<Eigen::Index>(v.in));
    Eigen::Map<const Eigen::RowVectorXd> b(params.data() + v.bias_offset,
                                           static_cast<Eigen::Index>(v.out));
    Eigen::MatrixXd z = t.activations.back() * w.transpose();
    z.rowwise() += b;
    t.pre.push_back(z);
    if (l + 1 < views.size())
      t.activations.push_back(z.cwiseMax(0.0));
    else
      t.probs = softmax_rows(z);
  }
  return t;
}

double cross_entropy(const Eigen::MatrixXd& probs, std::span<const int> labels)
{
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    s -= std::log(std::max(probs(static_cast<Eigen::Index>(i), labels[i]), 1e-300));
  return s / static_cast<double>(labels.size());
}

void check_labels(std::span<const int> labels, Eigen::Index rows, std::size_t classes)
{
  if (static_cast<Eigen::Index>(labels.size()) != rows)
    throw std::invalid_argument("label count does not match sample count");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw std::invalid_argument("label " + std::to_string(y) + " out of range");
  }
}

std::vector<double> backprop(const MlpShape& shape, std::span<const double> params,
                             const Eigen::MatrixXd& x, std::span<const int> labels,
                             double* loss_out)
{
  check_labels(labels, x.rows(), shape.classes);
  const auto views = layer_views(shape);
  const auto t = forward(shape, params, x);
  if (loss_out)
    *loss_out = cross_entropy(t.probs, labels);

  const double n = static_cast<double>(x.rows());
  Eigen::MatrixXd delta = t.probs;
  for (std::size_t i = 0; i < labels.size(); ++i)
    delta(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  delta /= n;

  std::vector<double> grad(params.size(), 0.0);
  for (std::size_t l = views.size(); l-- > 0;) {
    const auto& v = views[l];
    const Eigen::MatrixXd& a_prev = t.activations[l];
    RowMap gw(grad.data() + v.weight_offset, static_cast<Eigen::Index>(v.out),
              static_cast<Eigen::Index>(v.in));
    gw = delta.transpose() * a_prev;
    Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + v.bias_offset,
                                      static_cast<Eigen::Index>(v.out));
    gb = delta.colwise().sum();
    if (l == 0)
      break;
    ConstRowMap w(params.data() + v.weight_offset, static_cast<Eigen::Index>(v.out),
                  static_cast<Eigen::Index>(v.in));
    Eigen::MatrixXd back = delta * w;
    const Eigen::MatrixXd& z_prev = t.pre[l - 1];
    delta = (z_prev.array() > 0.0).select(back, 0.0);
  }
  return grad;
}

} // namespace

void Dataset::validate() const
{
  if (labels.empty())
    throw std::invalid_argument("Dataset: must contain at least one sample");
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw std::invalid_argument("Dataset: feature rows do not match labels");
  if (classes < 1)
    throw std::invalid_argument("Dataset: classes must be positive");
  check_labels(labels, features.rows(), static_cast<std::size_t>(classes));
  if (!features.allFinite())
    throw std::invalid_argument("Dataset: non-finite feature value");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const
{
  Dataset out;
  out.classes = classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
      features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

std::size_t MlpShape::param_count() const
{
  std::size_t total = 0;
  for (const auto& s : layer_shapes())
    total += shape_size(s);
  return total;
}

std::vector<std::vector<std::size_t>> MlpShape::layer_shapes() const
{
  std::vector<std::vector<std::size_t>> shapes;
  for (const auto& v : layer_views(*this)) {
    shapes.push_back({ v.out, v.in });
    shapes.push_back({ v.out });
  }
  return shapes;
}

std::string MlpShape::describe() const
{
  std::ostringstream os;
  os << input;
  for (auto h : hidden)
    os << '-' << h;
  os << '-' << classes;
  return os.str();
}

MlpModel::MlpModel(MlpShape shape, WeightVector params)
  : shape_(std::move(shape))
  , params_(std::move(params))
{
  if (shape_.input == 0 || shape_.classes == 0)
    throw std::invalid_argument("MlpModel: input and class counts must be positive");
  if (params_.size() != shape_.param_count())
    throw std::invalid_argument("MlpModel: expected " +
                                std::to_string(shape_.param_count()) +
                                " parameters, got " + std::to_string(params_.size()));
}

MlpModel MlpModel::initialize(const MlpShape& shape, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::vector<double> p(shape.param_count(), 0.0);
  const auto views = layer_views(shape);
  for (std::size_t l = 0; l < views.size(); ++l) {
    const auto& v = views[l];
    // He-uniform for ReLU layers; the softmax layer starts at zero.
    if (l + 1 == views.size())
      continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(v.in));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < v.in * v.out; ++i)
      p[v.weight_offset + i] = u(rng);
  }
  return MlpModel(shape, WeightVector(std::move(p)));
}

Eigen::MatrixXd MlpModel::predict_proba(const Eigen::MatrixXd& x) const
{
  return forward(shape_, params_.values(), x).probs;
}

double MlpModel::loss(const Eigen::MatrixXd& x, std::span<const int> labels) const
{
  check_labels(labels, x.rows(), shape_.classes);
  return cross_entropy(predict_proba(x), labels);
}

WeightVector gradient(const MlpModel& model, const Eigen::MatrixXd& x,
                      std::span<const int> labels)
{
  if (labels.empty())
    throw std::invalid_argument("gradient: empty batch");
  return WeightVector(backprop(model.shape(), model.params().values(), x, labels, nullptr));
}

void TrainConfig::validate() const
{
  if (epochs < 0 || batch_size <= 0 || learning_rate <= 0.0 || beta1 < 0.0 ||
      beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || epsilon <= 0.0)
    throw std::invalid_argument("TrainConfig: invalid hyper-parameters");
}

WeightVector local_train(const MlpModel& model, const Dataset& ds,
                         const TrainConfig& cfg, std::uint64_t seed)
{
  cfg.validate();
  ds.validate();
  if (ds.dim() != model.shape().input)
    throw std::invalid_argument("local_train: dataset dimension does not match model");
  if (static_cast<std::size_t>(ds.classes) > model.shape().classes)
    throw std::invalid_argument("local_train: dataset has more classes than the model");

  std::vector<double> w(model.params().begin(), model.params().end());
  std::vector<double> m(w.size(), 0.0);
  std::vector<double> v(w.size(), 0.0);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
      std::vector<int> yb(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        xb.row(static_cast<Eigen::Index>(i)) =
          ds.features.row(static_cast<Eigen::Index>(rows[i]));
        yb[i] = ds.labels[rows[i]];
      }
      double loss = 0.0;
      const auto g = backprop(model.shape(), w, xb, yb, &loss);
      if (!std::isfinite(loss))
        throw TrainingDiverged("local_train: non-finite loss at epoch " +
                               std::to_string(epoch) + ", batch starting at " +
                               std::to_string(start));
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
  }
  return WeightVector(std::move(w));
}

double evaluate(const MlpModel& model, const Dataset& ds)
{
  ds.validate();
  const auto probs = model.predict_proba(ds.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Eigen::Index arg = 0;
    probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    if (arg == ds.labels[i])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

Dataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t d, int classes,
                      double cluster_spread, double center_scale)
{
  if (n == 0 || d == 0 || classes <= 0)
    throw std::invalid_argument("synth_dataset: n, d and classes must be positive");
  if (static_cast<std::size_t>(classes) > n)
    throw std::invalid_argument("synth_dataset: more classes than samples");
  if (!(cluster_spread >= 0.0))
    throw std::invalid_argument("synth_dataset: spread must be non-negative");
  if (!(center_scale >= 0.0))
    throw std::invalid_argument("synth_dataset: center scale must be non-negative");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd centers(classes, static_cast<Eigen::Index>(d));
  for (Eigen::Index c = 0; c < centers.rows(); ++c)
    for (Eigen::Index j = 0; j < centers.cols(); ++j)
      centers(c, j) = center_scale * normal(rng);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset ds;
  ds.classes = classes;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
        centers(labels[i], static_cast<Eigen::Index>(j)) + cluster_spread * normal(rng);
  ds.labels = std::move(labels);
  return ds;
}

Eigen::MatrixXd probe_inputs(const Dataset& ds, std::size_t count, std::uint64_t seed)
{
  ds.validate();
  std::mt19937_64 rng(seed);
  const Eigen::RowVectorXd lo = ds.features.colwise().minCoeff();
  const Eigen::RowVectorXd hi = ds.features.colwise().maxCoeff();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(count), ds.features.cols());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      x(i, j) = lo[j] + (hi[j] - lo[j]) * u(rng);
  return x;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double test_fraction,
                                          std::uint64_t seed)
{
  ds.validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split_holdout: fraction must be in (0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = std::max<std::size_t>(
    1, static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(ds.size()))));
  if (n_test >= ds.size())
    throw std::invalid_argument("split_holdout: nothing left for training");
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<long>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<long>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return { ds.subset(train), ds.subset(test) };
}

std::vector<Dataset> dirichlet_partition(const Dataset& ds, std::size_t clients,
                                         double alpha, std::uint64_t seed)
{
  ds.validate();
  if (clients == 0)
    throw std::invalid_argument("dirichlet_partition: need at least one client");
  if (!(alpha > 0.0))
    throw std::invalid_argument("dirichlet_partition: alpha must be positive");
  if (ds.size() < clients)
    throw std::invalid_argument("dirichlet_partition: fewer samples than clients");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.classes));
  for (std::size_t i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  constexpr int max_attempts = 1000;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<std::vector<std::size_t>> assigned(clients);
    for (auto rows : by_class) {
      if (rows.empty())
        continue;
      std::shuffle(rows.begin(), rows.end(), rng);
      std::vector<double> p(clients);
      double total = 0.0;
      for (auto& x : p) {
        x = gamma(rng);
        total += x;
      }
      if (!(total > 0.0)) {
        std::fill(p.begin(), p.end(), 1.0);
        total = static_cast<double>(clients);
      }
      // Cumulative cut points; the last client absorbs rounding.
      std::size_t start = 0;
      double cum = 0.0;
      for (std::size_t k = 0; k < clients; ++k) {
        cum += p[k] / total;
        std::size_t stop = (k + 1 == clients)
                             ? rows.size()
                             : static_cast<std::size_t>(
                                 std::llround(cum * static_cast<double>(rows.size())));
        stop = std::clamp(stop, start, rows.size());
        assigned[k].insert(assigned[k].end(), rows.begin() + static_cast<long>(start),
                           rows.begin() + static_cast<long>(stop));
        start = stop;
      }
    }
    const bool any_empty = std::any_of(assigned.begin(), assigned.end(),
                                       [](const auto& a) { return a.empty(); });
    if (any_empty)
      continue;
    std::vector<Dataset> out;
    out.reserve(clients);
    for (auto& a : assigned) {
      std::sort(a.begin(), a.end());
      out.push_back(ds.subset(a));
    }
    return out;
  }
  throw std::runtime_error("dirichlet_partition: could not avoid empty clients after " +
                           std::to_string(max_attempts) + " draws");
}

double label_entropy(const Dataset& ds, int classes)
{
  if (ds.labels.empty())
    throw std::invalid_argument("label_entropy: empty dataset");
  if (classes <= 1)
    return 0.0;
  std::vector<double> hist(static_cast<std::size_t>(classes), 0.0);
  for (int y : ds.labels)
    hist.at(static_cast<std::size_t>(y)) += 1.0;
  const double n = static_cast<double>(ds.labels.size());
  double h = 0.0;
  for (double c : hist) {
    if (c > 0.0) {
      const double p = c / n;
      h -= p * std::log(p);
    }
  }
  return h / std::log(static_cast<double>(classes));
}

Dataset load_csv(const std::filesystem::path& path, int classes)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("load_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_csv: empty file " + path.string());

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "label")
    throw std::runtime_error("load_csv: header must be f0,...,f{d-1},label");
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "f" + std::to_string(j))
      throw std::runtime_error("load_csv: unexpected header column '" + header[j] + "'");
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        if (col < d)
          values.push_back(std::stod(cell));
        else if (col == d)
          labels.push_back(std::stoi(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                 ": cannot parse '" + cell + "'");
      }
      ++col;
    }
    if (col != d + 1)
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                               ": expected " + std::to_string(d + 1) + " columns");
  }

  Dataset ds;
  ds.labels = std::move(labels);
  ds.features.resize(static_cast<Eigen::Index>(ds.labels.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
        values[i * d + j];
  const int max_label = ds.labels.empty()
                          ? 0
                          : *std::max_element(ds.labels.begin(), ds.labels.end());
  ds.classes = classes > 0 ? classes : max_label + 1;
  ds.validate();
  return ds;
}

} // namespace flaegis
