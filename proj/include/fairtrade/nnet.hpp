#pragma once

// Minimal feed-forward engine. Batches are column-major: one column per sample.

#include "fairtrade/core.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fairtrade::nnet {

inline constexpr double kSigmaMin = 0.1;

enum class Activation { ELU, ReLU };
enum class HeadKind { Bernoulli, Gaussian, Categorical };

std::string to_string(Activation a);
std::string to_string(HeadKind k);
Activation activation_from_string(const std::string& s);
HeadKind head_kind_from_string(const std::string& s);

struct HeadSpec {
  HeadKind kind = HeadKind::Bernoulli;
  Index dim = 1;
  Index categories = 0;  // Categorical only

  static HeadSpec bernoulli(Index dim) { return {HeadKind::Bernoulli, dim, 0}; }
  static HeadSpec gaussian(Index dim) { return {HeadKind::Gaussian, dim, 0}; }
  static HeadSpec categorical(Index k, Index dim = 1) { return {HeadKind::Categorical, dim, k}; }

  /// Number of raw network outputs feeding this head.
  Index raw_width() const;
  void validate() const;
  bool operator==(const HeadSpec&) const = default;
};

struct MlpSpec {
  Index input_dim = 1;
  std::vector<Index> hidden_dims;
  Activation hidden_activation = Activation::ELU;
  std::vector<HeadSpec> heads;
  Index branches = 1;  // >1 gives one output layer per branch over a shared trunk

  Index output_width() const;
  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

/// Flat parameter vector with named blocks and a gradient vector of identical layout.
class ParamStore {
 public:
  struct Block {
    std::string name;
    Index offset = 0;
    Index rows = 0;
    Index cols = 0;
    Index size() const { return rows * cols; }
  };

  /// Appends a zero-initialized rows x cols block; names must be unique.
  Index add(const std::string& name, Index rows, Index cols);

  Index size() const { return values_.size(); }
  const std::vector<Block>& layout() const { return layout_; }
  const Block& block(Index id) const { return layout_.at(static_cast<std::size_t>(id)); }
  Index find(const std::string& name) const;  // -1 if absent

  Eigen::Map<MatrixXd> param(Index id);
  Eigen::Map<const MatrixXd> param(Index id) const;
  Eigen::Map<MatrixXd> grad(Index id);

  VectorXd& values() { return values_; }
  const VectorXd& values() const { return values_; }
  VectorXd& grads() { return grads_; }
  const VectorXd& grads() const { return grads_; }

  void zero_grad() { grads_.setZero(); }

 private:
  std::vector<Block> layout_;
  VectorXd values_;
  VectorXd grads_;
};

/// Distribution parameters for one head, one column per sample.
struct HeadParams {
  HeadKind kind = HeadKind::Bernoulli;
  MatrixXd prob;  // Bernoulli: dim x B; Categorical: (dim*k) x B
  MatrixXd mean;  // Gaussian
  MatrixXd sd;    // Gaussian, >= kSigmaMin
};

HeadParams decode_head(const HeadSpec& head, const Eigen::Ref<const MatrixXd>& raw);

/// Per-sample log-likelihood of `obs` (dim x B) under the decoded head.
RowVectorXd log_prob(const HeadSpec& head, const HeadParams& params, const Eigen::Ref<const MatrixXd>& obs);

/// Same as log_prob but straight from raw outputs, optionally adding d(sum of
/// weights .* loglik)/d raw into `d_raw`.
RowVectorXd log_prob_raw(const HeadSpec& head, const Eigen::Ref<const MatrixXd>& raw,
                         const Eigen::Ref<const MatrixXd>& obs, MatrixXd* d_raw = nullptr,
                         const RowVectorXd* weights = nullptr);

/// Mean (Gaussian mean, Bernoulli probability, Categorical argmax code) per variable.
MatrixXd head_mean(const HeadSpec& head, const HeadParams& params);
/// One draw per variable; consumes the same number of uniforms/normals regardless of values.
MatrixXd head_sample(const HeadSpec& head, const HeadParams& params, Rng& rng);

/// Recorded activations of one forward pass, required by backward.
struct Tape {
  bool valid = false;
  std::vector<MatrixXd> layer_inputs;  // input of each hidden layer and of the output layer
  std::vector<MatrixXd> pre;           // hidden pre-activations
  std::vector<Index> branch;
  MatrixXd raw;                        // selected-branch outputs
};

class Mlp {
 public:
  Mlp() = default;
  /// Registers this network's blocks under `prefix` in `store`.
  Mlp(MlpSpec spec, ParamStore& store, const std::string& prefix);

  const MlpSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }

  /// Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
  void init_glorot(ParamStore& store, Rng& rng) const;

  /// Raw outputs (output_width x B). `branch` is empty (all zero) or one index per sample.
  MatrixXd raw_output(const ParamStore& store, const Eigen::Ref<const MatrixXd>& input,
                      std::span<const Index> branch = {}) const;
  Tape forward(const ParamStore& store, const Eigen::Ref<const MatrixXd>& input,
               std::span<const Index> branch = {}) const;
  /// Accumulates parameter gradients given d loss / d raw; returns d loss / d input.
  MatrixXd backward(ParamStore& store, const Tape& tape, const Eigen::Ref<const MatrixXd>& d_raw) const;

  /// Splits raw outputs into per-head blocks.
  std::vector<HeadParams> heads(const MatrixXd& raw) const;
  Index head_offset(std::size_t head) const { return head_offsets_.at(head); }
  Eigen::Block<const MatrixXd> head_raw(const MatrixXd& raw, std::size_t head) const;

  Index hidden_weight(std::size_t layer) const { return hidden_w_.at(layer); }
  Index output_weight(Index branch) const { return out_w_.at(static_cast<std::size_t>(branch)); }
  Index output_bias(Index branch) const { return out_b_.at(static_cast<std::size_t>(branch)); }

 private:
  void check_input(const Eigen::Ref<const MatrixXd>& input, std::span<const Index> branch) const;

  MlpSpec spec_;
  std::string prefix_;
  std::vector<Index> hidden_w_, hidden_b_, out_w_, out_b_;
  std::vector<Index> head_offsets_;
};

template <typename Derived>
auto elu(const Eigen::ArrayBase<Derived>& x) {
  return (x > 0.0).select(x, x.exp() - 1.0);
}

template <typename Derived>
auto relu(const Eigen::ArrayBase<Derived>& x) {
  return x.max(0.0);
}

/// z = mu + sigma .* eps; gradients: dz/dmu = 1, dz/dsigma = eps.
template <typename M, typename S, typename E>
MatrixXd sample_gaussian_reparam(const Eigen::MatrixBase<M>& mu, const Eigen::MatrixBase<S>& sigma,
                                 const Eigen::MatrixBase<E>& eps) {
  return (mu.array() + sigma.array() * eps.array()).matrix();
}

// ---- optimizers ----

enum class Algorithm { Adam, RMSprop };

struct OptState {
  Algorithm algorithm = Algorithm::Adam;
  long step_count = 0;
  VectorXd m;  // Adam first moment
  VectorXd v;  // Adam second moment / RMSprop mean square
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rho = 0.99;
  double epsilon = 1e-8;

  static OptState adam(Index size, double lr);
  static OptState rmsprop(Index size, double lr);
};

/// Applies one update from store.grads(), clears the gradients and bumps step_count.
/// Throws NumericalError (and leaves parameters untouched) on non-finite gradients.
void optimizer_step(OptState& opt, ParamStore& store);

// ---- verification ----

/// Loss evaluated at store.values(); must ADD its gradient into store.grads().
using LossFn = std::function<double(ParamStore&)>;

/// max_i |analytic - numeric| / max(1e-8, |analytic| + |numeric|) with central differences.
double grad_check(ParamStore& store, const LossFn& loss, double h = 1e-5);

// ---- checkpoints ----

nlohmann::json to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

/// {"version", "spec", "layout", "values"}; layout sorted by block name, values in that order.
nlohmann::json checkpoint_json(const nlohmann::json& spec, const ParamStore& store);
/// Loads values into an already-laid-out store; block names and shapes must match.
void load_checkpoint(const nlohmann::json& doc, ParamStore& store);

}  // namespace fairtrade::nnet
