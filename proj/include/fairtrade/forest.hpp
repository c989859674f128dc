#pragma once

// Bagged CART classifier for binary labels (Gini splits, majority vote).

#include "fairtrade/core.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace fairtrade::forest {

struct ForestConfig {
  Index n_trees = 100;
  Index max_depth = 8;
  Index min_leaf = 1;
  Index max_features = 0;  // 0: round(sqrt(p))
  std::uint64_t seed = 0;
};

class DecisionTree {
 public:
  struct Node {
    Index feature = -1;  // -1 for leaves
    double threshold = 0.0;
    Index left = -1, right = -1;
    double p1 = 0.0;  // class-1 fraction of the training rows in the node
  };

  /// `x` is n x p (rows = records); `rows` selects (with repetition) the training sample.
  static DecisionTree fit(const MatrixXd& x, const VectorXd& y, const std::vector<Index>& rows,
                          const ForestConfig& cfg, Rng& rng);

  double predict_p1(const Eigen::Ref<const RowVectorXd>& record) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  Index depth() const;

 private:
  std::vector<Node> nodes_;
};

class RandomForest {
 public:
  static RandomForest fit(const MatrixXd& x, const VectorXd& y, const ForestConfig& cfg);

  /// Fraction of trees voting for class 1.
  VectorXd predict_proba(const MatrixXd& x) const;
  /// Accuracy of the majority vote over trees that did not see each record; NaN if no record was out of bag.
  double oob_accuracy() const { return oob_accuracy_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  Index n_features() const { return n_features_; }

 private:
  std::vector<DecisionTree> trees_;
  Index n_features_ = 0;
  double oob_accuracy_ = 0.0;
};

}  // namespace fairtrade::forest
