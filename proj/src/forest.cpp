#include "fairtrade/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fairtrade::forest {

namespace {

struct Builder {
  const MatrixXd& x;
  const VectorXd& y;
  const ForestConfig& cfg;
  Rng& rng;
  Index mtry;
  std::vector<DecisionTree::Node>& nodes;
  std::vector<Index> features;

  Index grow(std::vector<Index>& rows, Index depth) {
    const auto n = static_cast<Index>(rows.size());
    double pos = 0.0;
    for (Index r : rows) pos += y(r);
    const Index id = static_cast<Index>(nodes.size());
    nodes.push_back({});
    nodes.back().p1 = pos / static_cast<double>(n);
    if (depth >= cfg.max_depth || pos == 0.0 || pos == static_cast<double>(n) || n < 2 * cfg.min_leaf) return id;

    std::shuffle(features.begin(), features.end(), rng);
    double best_gain = 1e-12;
    Index best_f = -1;
    double best_t = 0.0;
    const double parent = gini(pos, static_cast<double>(n));
    std::vector<Index> sorted = rows;
    for (Index k = 0; k < mtry; ++k) {
      const Index f = features[static_cast<std::size_t>(k)];
      std::sort(sorted.begin(), sorted.end(), [&](Index a, Index b) { return x(a, f) < x(b, f); });
      double left_pos = 0.0;
      for (Index i = 0; i + 1 < n; ++i) {
        left_pos += y(sorted[static_cast<std::size_t>(i)]);
        const double lo = x(sorted[static_cast<std::size_t>(i)], f), hi = x(sorted[static_cast<std::size_t>(i + 1)], f);
        const Index nl = i + 1, nr = n - nl;
        if (lo == hi || nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
        const double child = (static_cast<double>(nl) * gini(left_pos, static_cast<double>(nl)) +
                              static_cast<double>(nr) * gini(pos - left_pos, static_cast<double>(nr))) /
                             static_cast<double>(n);
        if (parent - child > best_gain) {
          best_gain = parent - child;
          best_f = f;
          best_t = 0.5 * (lo + hi);
        }
      }
    }
    if (best_f < 0) return id;
    std::vector<Index> left, right;
    for (Index r : rows) (x(r, best_f) <= best_t ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[static_cast<std::size_t>(id)].feature = best_f;
    nodes[static_cast<std::size_t>(id)].threshold = best_t;
    const Index l = grow(left, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = l;
    const Index r = grow(right, depth + 1);
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  static double gini(double pos, double n) {
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
  }
};

}  // namespace

DecisionTree DecisionTree::fit(const MatrixXd& x, const VectorXd& y, const std::vector<Index>& rows,
                               const ForestConfig& cfg, Rng& rng) {
  if (rows.empty()) throw ContractError("a tree needs at least one training row");
  const Index p = x.cols();
  Index mtry = cfg.max_features > 0 ? cfg.max_features
                                    : std::max<Index>(1, static_cast<Index>(std::lround(std::sqrt(static_cast<double>(p)))));
  mtry = std::min(mtry, p);
  DecisionTree t;
  std::vector<Index> features(static_cast<std::size_t>(p));
  std::iota(features.begin(), features.end(), Index{0});
  Builder b{x, y, cfg, rng, mtry, t.nodes_, features};
  std::vector<Index> r = rows;
  b.grow(r, 0);
  return t;
}

double DecisionTree::predict_p1(const Eigen::Ref<const RowVectorXd>& record) const {
  Index id = 0;
  while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
    const auto& nd = nodes_[static_cast<std::size_t>(id)];
    id = record(nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return nodes_[static_cast<std::size_t>(id)].p1;
}

Index DecisionTree::depth() const {
  std::vector<Index> d(nodes_.size(), 0);
  Index out = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& nd = nodes_[i];
    if (nd.feature < 0) continue;
    d[static_cast<std::size_t>(nd.left)] = d[i] + 1;
    d[static_cast<std::size_t>(nd.right)] = d[i] + 1;
    out = std::max(out, d[i] + 1);
  }
  return out;
}

RandomForest RandomForest::fit(const MatrixXd& x, const VectorXd& y, const ForestConfig& cfg) {
  const Index n = x.rows();
  if (n < 1 || y.size() != n) throw ContractError("forest needs matching non-empty features and labels");
  if (cfg.n_trees < 1 || cfg.max_depth < 0 || cfg.min_leaf < 1) throw ContractError("invalid forest configuration");
  for (Index i = 0; i < n; ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw ContractError("forest labels must be 0 or 1");
  if (!x.allFinite()) throw ContractError("forest features must be finite");

  RandomForest f;
  f.n_features_ = x.cols();
  VectorXd votes = VectorXd::Zero(n), counted = VectorXd::Zero(n);
  for (Index t = 0; t < cfg.n_trees; ++t) {
    Rng rng(derive_seed(cfg.seed, "tree", static_cast<std::uint64_t>(t)));
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::vector<char> in_bag(static_cast<std::size_t>(n), 0);
    for (auto& r : rows) {
      r = pick(rng);
      in_bag[static_cast<std::size_t>(r)] = 1;
    }
    f.trees_.push_back(DecisionTree::fit(x, y, rows, cfg, rng));
    for (Index i = 0; i < n; ++i)
      if (!in_bag[static_cast<std::size_t>(i)]) {
        votes(i) += round_label(f.trees_.back().predict_p1(x.row(i)));
        counted(i) += 1.0;
      }
  }
  double correct = 0.0, total = 0.0;
  for (Index i = 0; i < n; ++i)
    if (counted(i) > 0.0) {
      correct += round_label(votes(i) / counted(i)) == y(i) ? 1.0 : 0.0;
      total += 1.0;
    }
  f.oob_accuracy_ = total > 0.0 ? correct / total : std::numeric_limits<double>::quiet_NaN();
  return f;
}

VectorXd RandomForest::predict_proba(const MatrixXd& x) const {
  if (x.cols() != n_features_) throw ContractError("forest feature width mismatch");
  VectorXd p = VectorXd::Zero(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    for (const auto& t : trees_) p(i) += round_label(t.predict_p1(x.row(i)));
    p(i) /= static_cast<double>(trees_.size());
  }
  return p;
}

}  // namespace fairtrade::forest
