#include "flaegis/aggregate.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace flaegis;

namespace {

double naive_mode(const std::vector<double>& xs, const KdeGrid& g)
{
  double best = -1.0;
  double at = 0.0;
  for (int i = 0; i < g.bins; ++i) {
    double d = 0.0;
    for (double x : xs)
      d += std::exp(-0.5 * std::pow((g.at(i) - x) / g.bandwidth, 2));
    if (d > best * (1.0 + 1e-12)) {
      best = d;
      at = g.at(i);
    }
  }
  return at;
}

} // namespace

TEST_CASE("fedavg")
{
  const std::vector<WeightVector> one{ { 1, 2 } };
  CHECK(fedavg(one) == WeightVector{ 1, 2 });
  const std::vector<WeightVector> two{ { 0, 0 }, { 2, 4 } };
  CHECK(fedavg(two) == WeightVector{ 1, 2 });
  const std::vector<WeightVector> swapped{ { 2, 4 }, { 0, 0 } };
  CHECK(fedavg(swapped) == fedavg(two));
  const std::vector<double> w{ 1, 3 };
  CHECK(fedavg(two, w) == WeightVector{ 1.5, 3 });
  CHECK_THROWS(fedavg(std::vector<WeightVector>{}));
}

TEST_CASE("silverman bandwidth")
{
  const std::vector<double> xs{ 1, 2, 3, 4, 5 };
  CHECK(silverman_bandwidth(xs) ==
        doctest::Approx(1.06 * std::sqrt(2.5) * std::pow(5.0, -0.2)).epsilon(1e-12));
}

TEST_CASE("kde_mode examples")
{
  const std::vector<double> same(6, 3.7);
  CHECK(kde_mode(same) == 3.7);

  std::vector<double> lopsided(7, 0.0);
  lopsided.insert(lopsided.end(), 3, 10.0);
  const auto g = kde_grid(lopsided, {});
  CHECK(std::abs(kde_mode(lopsided) - 0.0) <= g.step);
  CHECK(std::abs(kde_mode(lopsided) - naive_mode(lopsided, g)) <= g.step);

  std::vector<double> bimodal(5, -1.0);
  bimodal.insert(bimodal.end(), 5, 1.0);
  CHECK(kde_mode(bimodal) < 0.0);

  const std::vector<double> bad{ 1.0, std::nan("") };
  CHECK_THROWS(kde_mode(bad));
}

TEST_CASE("kde_mode agrees with direct evaluation")
{
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> count(3, 50);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> xs(static_cast<std::size_t>(count(rng)));
    for (auto& x : xs)
      x = (t % 2 ? 3.0 * normal(rng) : normal(rng) + (rng() % 2) * 5.0);
    const auto g = kde_grid(xs, {});
    CHECK(std::abs(kde_mode(xs) - naive_mode(xs, g)) <= g.step * (1 + 1e-9));
  }
}

TEST_CASE("fft_aggregate")
{
  const WeightVector v{ 0.5, -1.0, 2.0 };
  std::vector<WeightVector> same(4, v);
  CHECK(fft_aggregate(same) == v);
  const std::vector<WeightVector> single{ v };
  CHECK(fft_aggregate(single) == v);

  std::vector<WeightVector> mix(7, v);
  for (int i = 0; i < 3; ++i)
    mix.push_back(WeightVector{ 10.5, 9.0, 12.0 });
  const auto out = fft_aggregate(mix);
  for (std::size_t j = 0; j < v.size(); ++j) {
    std::vector<double> column;
    for (const auto& m : mix)
      column.push_back(m[j]);
    CHECK(std::abs(out[j] - v[j]) <= kde_grid(column, {}).step);
  }
}

TEST_CASE("fft config validation")
{
  FftAggConfig cfg;
  cfg.grid_bins = 100;
  CHECK_THROWS(cfg.validate());
}
