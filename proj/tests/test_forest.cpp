#include <doctest.h>

#include "fairtrade/forest.hpp"

using namespace fairtrade;
using namespace fairtrade::forest;

namespace {

struct Toy {
  MatrixXd x;
  VectorXd y;
};

Toy separable(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Toy t{standard_normal(rng, n, 3), VectorXd(n)};
  for (Index i = 0; i < n; ++i) t.y(i) = t.x(i, 1) > 0.2 ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST_CASE("forest fits an axis-aligned boundary") {
  const auto train = separable(600, 1), test = separable(400, 2);
  ForestConfig cfg;
  cfg.n_trees = 30;
  cfg.max_features = 3;
  const auto rf = RandomForest::fit(train.x, train.y, cfg);
  const VectorXd p = rf.predict_proba(test.x);
  double hit = 0.0;
  for (Index i = 0; i < p.size(); ++i) hit += round_label(p(i)) == test.y(i) ? 1.0 : 0.0;
  CHECK(hit / static_cast<double>(p.size()) > 0.97);
  CHECK(rf.oob_accuracy() > 0.95);
  CHECK(rf.trees().size() == 30);
  for (const auto& t : rf.trees()) CHECK(t.depth() <= cfg.max_depth);
}

TEST_CASE("forest out-of-bag accuracy is at chance on noise labels") {
  Rng rng(5);
  const MatrixXd x = standard_normal(rng, 2000, 4);
  const MatrixXd u = standard_uniform(rng, 2000, 1);
  VectorXd y(2000);
  for (Index i = 0; i < 2000; ++i) y(i) = u(i, 0) < 0.5 ? 1.0 : 0.0;
  ForestConfig cfg;
  cfg.n_trees = 40;
  const auto rf = RandomForest::fit(x, y, cfg);
  CHECK(rf.oob_accuracy() == doctest::Approx(0.5).epsilon(0.12));
}

TEST_CASE("forest probabilities are vote fractions") {
  const auto t = separable(200, 3);
  ForestConfig cfg;
  cfg.n_trees = 7;
  const auto rf = RandomForest::fit(t.x, t.y, cfg);
  const VectorXd p = rf.predict_proba(t.x);
  for (Index i = 0; i < p.size(); ++i) {
    CHECK(p(i) >= 0.0);
    CHECK(p(i) <= 1.0);
    const double votes = p(i) * 7.0;
    CHECK(votes == doctest::Approx(std::round(votes)));
  }
}

TEST_CASE("forest is deterministic in its seed") {
  const auto t = separable(300, 4);
  ForestConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 11;
  const VectorXd a = RandomForest::fit(t.x, t.y, cfg).predict_proba(t.x);
  const VectorXd b = RandomForest::fit(t.x, t.y, cfg).predict_proba(t.x);
  CHECK(a == b);
  cfg.seed = 12;
  const auto other = RandomForest::fit(t.x, t.y, cfg);
  CHECK(other.oob_accuracy() > 0.9);
}

TEST_CASE("single tree with unlimited depth interpolates distinct records") {
  const auto t = separable(100, 6);
  std::vector<Index> rows(100);
  for (Index i = 0; i < 100; ++i) rows[static_cast<std::size_t>(i)] = i;
  ForestConfig cfg;
  cfg.max_depth = 50;
  cfg.max_features = 3;
  Rng rng(1);
  const auto tree = DecisionTree::fit(t.x, t.y, rows, cfg, rng);
  for (Index i = 0; i < 100; ++i) CHECK(tree.predict_p1(t.x.row(i)) == t.y(i));
}

TEST_CASE("forest rejects bad input") {
  const auto t = separable(20, 7);
  ForestConfig cfg;
  cfg.n_trees = 0;
  CHECK_THROWS_AS(RandomForest::fit(t.x, t.y, cfg), ContractError);
  cfg = {};
  VectorXd bad = t.y;
  bad(0) = 0.5;
  CHECK_THROWS_AS(RandomForest::fit(t.x, bad, cfg), ContractError);
  const auto rf = RandomForest::fit(t.x, t.y, cfg);
  CHECK_THROWS_AS(rf.predict_proba(MatrixXd::Zero(2, 5)), ContractError);
}
