#include "flaegis/learner.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace flaegis;

namespace {

Dataset toy_separable(std::size_t n, std::uint64_t seed)
{
  return synth_dataset(seed, n, 2, 2, 0.01, 5.0);
}

bool perceptron_separates(const Dataset& ds)
{
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  for (int epoch = 0; epoch < 1000; ++epoch) {
    int mistakes = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const Eigen::Vector3d x(ds.features(r, 0), ds.features(r, 1), 1.0);
      const double y = ds.labels[i] == 1 ? 1.0 : -1.0;
      if (y * w.dot(x) <= 0.0) {
        w += y * x;
        ++mistakes;
      }
    }
    if (mistakes == 0)
      return true;
  }
  return false;
}

double relative_error(const WeightVector& a, const std::vector<double>& b)
{
  double d = 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    s += b[i] * b[i];
  }
  return std::sqrt(d) / std::max(std::sqrt(s), 1e-12);
}

} // namespace

TEST_CASE("MLP 8-16-5 parameter count")
{
  const MlpShape shape;
  CHECK(shape.param_count() == 8 * 16 + 16 + 16 * 5 + 5);
  CHECK(MlpModel::initialize(shape, 1).params().size() == 229);
}

TEST_CASE("initialization is seeded and leaves the output layer at zero")
{
  const MlpShape shape;
  const auto a = MlpModel::initialize(shape, 9).params();
  CHECK(a == MlpModel::initialize(shape, 9).params());
  CHECK_FALSE(a == MlpModel::initialize(shape, 10).params());
  for (std::size_t i = 8 * 16 + 16; i < a.size(); ++i)
    CHECK(a[i] == 0.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 8);
  const auto p = MlpModel::initialize(shape, 9).predict_proba(x);
  CHECK((p.array() - 0.2).abs().maxCoeff() < 1e-12);
}

TEST_CASE("synth_dataset")
{
  const auto ds = toy_separable(10, 4);
  CHECK(ds.size() == 10);
  CHECK(perceptron_separates(ds));
  const auto again = toy_separable(10, 4);
  CHECK(ds.features == again.features);
  CHECK(ds.labels == again.labels);
  const auto single = synth_dataset(1, 12, 3, 1, 1.0);
  CHECK(std::all_of(single.labels.begin(), single.labels.end(), [](int y) { return y == 0; }));
  CHECK_THROWS(synth_dataset(1, 3, 2, 4, 1.0));
}

TEST_CASE("gradient matches central finite differences")
{
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 10; ++t) {
    MlpShape shape{ static_cast<std::size_t>(3 + t % 4), { static_cast<std::size_t>(4 + t) },
                    static_cast<std::size_t>(2 + t % 3) };
    if (t % 3 == 0)
      shape.hidden.push_back(5);
    std::vector<double> p(shape.param_count());
    for (auto& v : p)
      v = 0.4 * normal(rng);
    const MlpModel model(shape, WeightVector(p));
    Eigen::MatrixXd x(6, static_cast<Eigen::Index>(shape.input));
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x.data()[i] = normal(rng);
    std::vector<int> y(6);
    for (auto& l : y)
      l = static_cast<int>(rng() % shape.classes);
    std::vector<double> fd(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto up = p;
      auto down = p;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      fd[i] = (MlpModel(shape, WeightVector(up)).loss(x, y) -
               MlpModel(shape, WeightVector(down)).loss(x, y)) /
              2e-6;
    }
    CHECK(relative_error(gradient(model, x, y), fd) <= 1e-4);
  }
}

TEST_CASE("gradient is invariant to duplicating the batch")
{
  const MlpShape shape{ 3, { 4 }, 3 };
  const auto model = MlpModel::initialize(shape, 2);
  Eigen::MatrixXd x(2, 3);
  x << 1, 2, 3, -1, 0, 2;
  const std::vector<int> y{ 0, 2 };
  Eigen::MatrixXd xx(4, 3);
  xx << x, x;
  const std::vector<int> yy{ 0, 2, 0, 2 };
  CHECK(relative_error(gradient(model, xx, yy), gradient(model, x, y).vec()) < 1e-12);
}

TEST_CASE("gradient is symmetric across tied hidden units")
{
  const MlpShape shape{ 2, { 3 }, 2 };
  std::vector<double> p(shape.param_count(), 0.0);
  for (std::size_t i = 0; i < 6; ++i)
    p[i] = 0.5; // every hidden unit sees the same input weights
  for (std::size_t i = 9; i < 15; ++i)
    p[i] = 0.3;
  const MlpModel model(shape, WeightVector(p));
  Eigen::MatrixXd x(1, 2);
  x << 1.0, 1.0;
  const std::vector<int> y{ 1 };
  const auto g = gradient(model, x, y);
  CHECK(g[0] == doctest::Approx(g[2]));
  CHECK(g[0] == doctest::Approx(g[4]));
  CHECK(g[6] == doctest::Approx(g[7]));
}

TEST_CASE("local_train")
{
  const auto ds = synth_dataset(3, 200, 2, 2, 0.3, 3.0);
  const MlpShape shape{ 2, { 8 }, 2 };
  const auto model = MlpModel::initialize(shape, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK(local_train(model, ds, cfg, 5) == model.params());

  cfg.epochs = 50;
  cfg.learning_rate = 0.01;
  const auto w = local_train(model, ds, cfg, 5);
  CHECK(w == local_train(model, ds, cfg, 5));
  CHECK(evaluate(MlpModel(shape, w), ds) >= 0.95);

  cfg.learning_rate = -1.0;
  CHECK_THROWS(local_train(model, ds, cfg, 5));
}

TEST_CASE("local_train aborts on divergence")
{
  Dataset ds;
  ds.classes = 2;
  ds.features = Eigen::MatrixXd::Constant(8, 2, 1.7e308);
  ds.labels = { 0, 1, 0, 1, 0, 1, 0, 1 };
  const MlpShape shape{ 2, { 16 }, 2 };
  CHECK_THROWS_AS(local_train(MlpModel::initialize(shape, 1), ds, TrainConfig{}, 1),
                  TrainingDiverged);
}

TEST_CASE("evaluate")
{
  const auto ds = synth_dataset(11, 1000, 8, 5, 1.0);
  const MlpShape shape;
  // Zero output weights give uniform probabilities; ties resolve to class 0.
  CHECK(evaluate(MlpModel::initialize(shape, 1), ds) == doctest::Approx(0.2).epsilon(1e-9));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  std::vector<double> p(shape.param_count());
  for (auto& v : p)
    v = normal(rng);
  const double acc = evaluate(MlpModel(shape, WeightVector(p)), ds);
  CHECK(acc >= 0.0);
  CHECK(acc <= 0.5);
}

TEST_CASE("holdout split")
{
  const auto ds = synth_dataset(2, 100, 3, 2, 1.0);
  const auto [train, test] = split_holdout(ds, 0.2, 7);
  CHECK(train.size() == 80);
  CHECK(test.size() == 20);
  CHECK_THROWS(split_holdout(ds, 1.0, 7));
}

TEST_CASE("dirichlet partition")
{
  const auto ds = synth_dataset(1, 4000, 4, 5, 1.0);
  const auto even = dirichlet_partition(ds, 10, 1e6, 3);
  std::size_t total = 0;
  for (const auto& c : even) {
    total += c.size();
    CHECK(label_entropy(c, 5) > 0.97);
  }
  CHECK(total == ds.size());

  const auto skewed = dirichlet_partition(ds, 20, 0.1, 3);
  double mean = 0.0;
  for (const auto& c : skewed) {
    CHECK(c.size() > 0);
    mean += label_entropy(c, 5);
  }
  CHECK(mean / 20.0 < 0.8);

  const auto whole = dirichlet_partition(ds, 1, 0.5, 3);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].size() == ds.size());

  CHECK_THROWS(dirichlet_partition(synth_dataset(1, 5, 2, 2, 1.0), 6, 0.5, 1));
  CHECK(dirichlet_partition(ds, 20, 0.5, 9)[4].labels ==
        dirichlet_partition(ds, 20, 0.5, 9)[4].labels);
}

TEST_CASE("label entropy")
{
  Dataset ds;
  ds.classes = 4;
  ds.features = Eigen::MatrixXd::Zero(8, 1);
  ds.labels = { 0, 1, 2, 3, 0, 1, 2, 3 };
  CHECK(label_entropy(ds, 4) == doctest::Approx(1.0));
  ds.labels.assign(8, 2);
  CHECK(label_entropy(ds, 4) == 0.0);
}

TEST_CASE("csv loading")
{
  const auto path = std::filesystem::temp_directory_path() / "flaegis_test_data.csv";
  {
    std::ofstream out(path);
    out << "f0,f1,label\n0.5,1,0\n-2,3.25,1\n";
  }
  const auto ds = load_csv(path);
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 2);
  CHECK(ds.features(1, 1) == 3.25);
  CHECK(ds.labels == std::vector<int>{ 0, 1 });
  {
    std::ofstream out(path);
    out << "f0,f1,label\n0.5,x,0\n";
  }
  CHECK_THROWS(load_csv(path));
  std::filesystem::remove(path);
}
