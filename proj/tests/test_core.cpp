#include "flaegis/core.hpp"
#include "flaegis/linalg.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <random>
#include <set>

using namespace flaegis;

TEST_CASE("flatten concatenates layers")
{
  const std::vector<Tensor> layers{ { { 2 }, { 1, 2 } }, { { 1 }, { 3 } } };
  CHECK(flatten(layers) == WeightVector{ 1, 2, 3 });
  CHECK(flatten(std::vector<Tensor>{}).size() == 0);
}

TEST_CASE("flatten rejects non-finite entries with their index")
{
  const std::vector<Tensor> layers{ { { 3 }, { 1, std::nan(""), 3 } } };
  try {
    flatten(layers);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.index() == 1);
  }
  CHECK_THROWS_AS(WeightVector({ 1.0, std::numeric_limits<double>::infinity() }),
                  NonFiniteError);
}

TEST_CASE("unflatten inverts flatten")
{
  const std::vector<std::vector<std::size_t>> shapes{ { 2 }, { 1 } };
  const auto parts = unflatten(WeightVector{ 1, 2, 3 }, shapes);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].values == std::vector<double>{ 1, 2 });
  CHECK(parts[1].values == std::vector<double>{ 3 });

  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const std::vector<std::vector<std::size_t>> mlp{ { 16, 8 }, { 16 }, { 5, 16 }, { 5 } };
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(229);
    for (auto& x : v)
      x = normal(rng);
    const WeightVector w(v);
    CHECK(flatten(unflatten(w, mlp)) == w);
  }
  CHECK_THROWS(unflatten(WeightVector::zeros(228), mlp));
}

TEST_CASE("derive_seed is pure and separates streams")
{
  const RngSeed s{ 42 };
  CHECK(derive_seed(s, 3, 4, Purpose::local_train) == derive_seed(s, 3, 4, Purpose::local_train));
  CHECK(derive_seed(s, 0, 0, Purpose::data) != derive_seed(s, 0, 1, Purpose::data));
  CHECK(derive_seed(s, 0, 0, Purpose::data) != derive_seed(RngSeed{ 43 }, 0, 0, Purpose::data));
  CHECK(derive_seed(s, 0, 0, Purpose::data) != derive_seed(s, 0, 0, Purpose::holdout));

  std::set<std::uint64_t> seen;
  for (int r = 0; r < 20; ++r)
    for (int c = -1; c < 20; ++c)
      seen.insert(derive_seed(s, r, c, Purpose::local_train));
  CHECK(seen.size() == 20 * 21);
}

TEST_CASE("server view drops the ground-truth flag")
{
  const std::vector<ClientUpdate> updates{ { 0, WeightVector{ 1 }, false },
                                           { 1, WeightVector{ 2 }, true } };
  const auto view = server_view(updates);
  REQUIRE(view.size() == 2);
  CHECK(view[1].client_id == 1);
  CHECK(view[1].weights == WeightVector{ 2 });
}

TEST_CASE("verdict construction")
{
  const std::vector<int> ids{ 4, 1, 7, 3 };
  const std::vector<int> flagged{ 7 };
  const auto v = Verdict::from_flags(ids, flagged, 2);
  CHECK(v.benign_ids == std::vector<int>{ 1, 3, 4 });
  CHECK(v.flagged_ids == std::vector<int>{ 7 });
  CHECK(v.is_flagged(7));
  CHECK_FALSE(v.is_flagged(4));
  const std::vector<int> stranger{ 9 };
  CHECK_THROWS(Verdict::from_flags(ids, stranger, 2));
  CHECK_THROWS(Verdict::from_flags(ids, flagged, 1));
  CHECK(Verdict::all_benign(ids).flagged_ids.empty());
}

TEST_CASE("similarity matrix validation")
{
  CHECK_NOTHROW(SimilarityMatrix(Eigen::MatrixXd::Identity(3, 3)));
  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(2, 2);
  asym(0, 1) = 0.5;
  CHECK_THROWS(SimilarityMatrix(asym));
}

TEST_CASE("jacobi eigensolver matches Eigen")
{
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  for (int n : { 1, 2, 5, 12, 20 }) {
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j)
        a(i, j) = a(j, i) = normal(rng);
    const auto mine = linalg::jacobi_eigen(a);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(a);
    for (int i = 0; i < n; ++i)
      CHECK(mine.values[i] == doctest::Approx(ref.eigenvalues()[i]).epsilon(1e-9));
    const Eigen::MatrixXd recon =
      mine.vectors * mine.values.asDiagonal() * mine.vectors.transpose();
    CHECK((recon - a).norm() <= 1e-8 * std::max(1.0, a.norm()));
    CHECK((mine.vectors.transpose() * mine.vectors - Eigen::MatrixXd::Identity(n, n)).norm() <=
          1e-9);
    for (int j = 0; j < n; ++j) {
      Eigen::Index arg = 0;
      mine.vectors.col(j).cwiseAbs().maxCoeff(&arg);
      CHECK(mine.vectors(arg, j) > 0.0);
    }
  }
}

TEST_CASE("jacobi eigensolver reports non-convergence")
{
  Eigen::MatrixXd a(3, 3);
  a << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  CHECK_THROWS_AS(linalg::jacobi_eigen(a, 1e-30, 0), linalg::EigenNonConvergence);
}
