#pragma once

// Ground-truth structural causal models. Every node (latent ones included)
// has a mechanism f(parents, noise); with the noise retained, interventions
// and nested counterfactuals are evaluated exactly.

#include "fairtrade/core.hpp"
#include "fairtrade/dataset.hpp"
#include "fairtrade/graph.hpp"

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fairtrade::scm {

/// Parent values handed to a mechanism, in the mechanism's declared parent order.
/// Each entry is n x dim(parent).
class ParentValues {
 public:
  ParentValues(const std::vector<std::string>& names, std::vector<const MatrixXd*> values)
      : names_(&names), values_(std::move(values)) {}
  const MatrixXd& operator[](std::size_t i) const { return *values_.at(i); }
  const MatrixXd& operator[](const std::string& name) const;
  std::size_t size() const { return values_.size(); }

 private:
  const std::vector<std::string>* names_;
  std::vector<const MatrixXd*> values_;
};

struct Mechanism {
  std::vector<std::string> parents;
  Index dim = 1;
  Index noise_dim = 1;
  std::vector<ColumnKind> kinds;  // per output coordinate; defaults to Gaussian
  Index categories = 0;           // for Categorical coordinates
  std::function<MatrixXd(Rng&, Index n)> draw_noise;
  std::function<MatrixXd(const ParentValues&, const MatrixXd& noise)> evaluate;
};

class Scm {
 public:
  /// Every graph node needs a mechanism whose parent set equals its graph parents.
  Scm(graph::CausalGraph g, std::map<std::string, Mechanism> mechanisms);

  const graph::CausalGraph& graph() const { return graph_; }
  /// Topological order; all node-indexed containers follow it.
  const std::vector<std::string>& order() const { return order_; }
  Index index(const std::string& node) const;
  const Mechanism& mechanism(const std::string& node) const { return mechanisms_.at(index(node)); }
  const Mechanism& mechanism(Index i) const { return mechanisms_.at(static_cast<std::size_t>(i)); }
  /// Name of the noise column `k` of `node`: "U_<node>[k]".
  static std::string noise_name(const std::string& node, Index k);

 private:
  graph::CausalGraph graph_;
  std::vector<std::string> order_;
  std::vector<Mechanism> mechanisms_;
};

/// Node-indexed values and exogenous noise, aligned with Scm::order().
struct Sample {
  std::vector<MatrixXd> values;
  std::vector<MatrixXd> noise;  // empty when not retained

  Index rows() const { return values.empty() ? 0 : values.front().rows(); }
  bool has_noise() const { return !noise.empty(); }
  const MatrixXd& value(const Scm& scm, const std::string& node) const { return values.at(scm.index(node)); }
};

/// Node -> forced value, either 1 x dim (broadcast) or n x dim (per record).
using Interventions = std::map<std::string, MatrixXd>;

Interventions set_value(const std::string& node, double v);

std::vector<MatrixXd> draw_noise(const Scm& scm, Index n, std::uint64_t seed);
/// Ancestral evaluation with fixed noise and optional interventions.
Sample evaluate(const Scm& scm, std::vector<MatrixXd> noise, const Interventions& interventions = {});
Sample sample(const Scm& scm, Index n, std::uint64_t seed);

/// Columns per node in topological order; latent nodes are kept with observed = false.
Dataset to_dataset(const Scm& scm, const Sample& s, bool with_noise = true);
/// Rebuilds a Sample from a dataset carrying noise columns; throws ContractError otherwise.
Sample from_dataset(const Scm& scm, const Dataset& d);

Dataset sample_dataset(const Scm& scm, Index n, std::uint64_t seed);
Dataset intervene_sample(const Scm& scm, const Interventions& interventions, Index n, std::uint64_t seed);
/// Abduction is exact: the factual noise is reused and mechanisms re-evaluated.
Sample counterfactual(const Scm& scm, const Sample& factual, const Interventions& interventions);
Dataset counterfactual_record(const Scm& scm, const Dataset& records, const Interventions& interventions);

/// Nested counterfactual world: the sensitive value travels as `active` along the
/// designated paths and as `base` along all others. A node's value depends on the
/// downstream route (suffix) it is read through, so values are keyed by suffix.
class NestedWorld {
 public:
  NestedWorld(const Scm& scm, const Sample& factual, graph::PathSet active_paths, VectorXd a_active, VectorXd a_base);
  /// Every path active, i.e. the ordinary counterfactual do(A = a_active).
  static NestedWorld full(const Scm& scm, const Sample& factual, VectorXd a_active, VectorXd a_base);

  /// `suffix` runs from `node` to the outcome (its last element is taken to be the outcome).
  const MatrixXd& value(const std::string& node, const graph::DirectedPath& suffix);
  const MatrixXd& outcome();
  /// Value of `node` as read by a predictor taking the outcome's place.
  const MatrixXd& input(const std::string& node);

  const Scm& scm() const { return *scm_; }
  const Sample& factual() const { return *factual_; }
  Index rows() const { return factual_->rows(); }
  bool path_active(const graph::DirectedPath& p) const;

 private:
  const Scm* scm_;
  const Sample* factual_;
  graph::PathSet paths_;
  bool all_active_ = false;
  MatrixXd a_active_, a_base_;
  std::string sensitive_, outcome_;
  std::map<std::pair<std::string, std::string>, MatrixXd> memo_;
};

struct NestedCounterfactual {
  graph::PathSet paths;
  double active = 1.0;
  double base = 0.0;
};

struct PseEstimate {
  double value = 0.0;
  double std_error = 0.0;
  Index n = 0;
};

/// E[Y(paths active)] - E[Y(all base)] with noise shared between the two terms.
/// ValidationError naming the witness when the path set is not identifiable.
PseEstimate pse(const Scm& scm, const NestedCounterfactual& nc, Index n, std::uint64_t seed);

// ---------------------------------------------------------------- generators

struct AppendixDgpParams {
  double a_x = 0.1;
  double b_x = 0.55;
  double c_x = 0.2;
  double p_a = 0.5;
  double mu_z = 0.0;
  double sigma_z = 1.0;
  double gamma_x = 1.5;
  double gamma_y = -8.5;
  double theta_a = 3.0;
  double theta_x = 2.0 / 3.0;
  double theta_z = 2.0;
};

/// fig1a structure: A ~ Ber(p_a), Z ~ N(mu_z, sigma_z), three Gaussian covariates, binary Y.
Scm appendix_dgp(const AppendixDgpParams& p = {});
/// Outcome logit of the appendix process (theta_x multiplies the sum of squared covariates).
VectorXd appendix_logit(const AppendixDgpParams& p, const VectorXd& a, const MatrixXd& x, const VectorXd& z);

struct LinearGaussianSpec {
  std::map<std::pair<std::string, std::string>, double> coefficients;  // missing edges weigh 0
  std::map<std::string, double> noise_sd;                               // default 1
  double slope_sd = 0.0;   // per-record N(0, slope_sd) perturbation of every coefficient
  double p_sensitive = 0.5;
};

/// One-dimensional linear mechanisms; the sensitive node is Bernoulli(p_sensitive).
Scm linear_gaussian(const graph::CausalGraph& g, const LinearGaussianSpec& spec);

/// Synthetic fig1c process with an a-dependent outcome: 2-d latent, 2 base, 3 covariate,
/// 2 binary resolving variables, binary outcome.
struct Fig1cParams {
  double a_to_x = 1.0;
  double a_to_r = 1.0;
  double a_to_y = 0.8;
  double x_noise = 0.7;
  double y_scale = 1.0;
};
Scm fig1c_synthetic(const Fig1cParams& p = {});

/// Semi-synthetic process over the fig2 structure (Z, A -> X, T; X, T, Z, A -> Y).
struct Fig2Config {
  Index covariates = 5;
  double treatment_effect = 6.0;
  double sensitive_effect = 1.0;
  double outcome_noise = 1.0;
  /// Replacement mechanisms; their parents must be a subset of the node's fig2 parents.
  std::map<std::string, Mechanism> overrides;
};
Scm semi_synthetic_fig2(const Fig2Config& cfg = {});

/// appendix, fig1c, fig2-default, linear-chain, linear-fig1c.
Scm builtin_scm(std::string_view name);
std::vector<std::string> builtin_scm_names();

}  // namespace fairtrade::scm
