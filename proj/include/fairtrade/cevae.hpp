#pragma once

// Causal-effect VAE over a role-labeled graph. The latent node is inferred by
// q(z | observed non-outcome nodes); every observed node that is not sensitive
// or base gets a generative network reading its graph parents, with the
// sensitive value selecting one of two output branches (TAR heads).

#include "fairtrade/core.hpp"
#include "fairtrade/dataset.hpp"
#include "fairtrade/graph.hpp"
#include "fairtrade/nnet.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fairtrade::cevae {

struct TrainConfig {
  double learning_rate = 1e-4;
  Index batch_size = 512;
  Index n_mc_samples = 1;
  Index epochs = 30;
  std::uint64_t seed = 0;
  Index latent_dim = 5;
  Index hidden_width = 100;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct ElboTerms {
  double reg = 0.0;        // log p(z) - log q(z | .)
  double rec_x = 0.0;      // covariates
  double rec_r = 0.0;      // resolving variables
  double rec_y = 0.0;      // outcome
  double rec_other = 0.0;  // treatment / other modeled nodes
  double total = 0.0;
};

/// Per-record posterior, one row per record.
struct Posterior {
  MatrixXd mean;  // n x D_z
  MatrixXd sd;    // n x D_z, >= 0.1
};

enum class DecodeMode { Mean, Sample };
std::string to_string(DecodeMode m);
DecodeMode decode_mode_from_string(const std::string& s);

/// Value of the sensitive variable used while decoding.
struct APolicy {
  enum class Kind { Observed, Switch, Set, PerRecord } kind = Kind::Observed;
  double value = 0.0;
  VectorXd values;

  static APolicy observed() { return {}; }
  static APolicy switched() { return {Kind::Switch, 0.0, {}}; }
  static APolicy set(double a) { return {Kind::Set, a, {}}; }
  static APolicy per_record(VectorXd a) { return {Kind::PerRecord, 0.0, std::move(a)}; }
  VectorXd resolve(const VectorXd& observed_a) const;
};

class CevaeModel {
 public:
  /// `profile` lists the dataset columns (of observed nodes) the model reads and decodes.
  CevaeModel(graph::CausalGraph g, DataProfile profile, TrainConfig cfg);
  static CevaeModel for_dataset(const graph::CausalGraph& g, const Dataset& d, const TrainConfig& cfg);

  const graph::CausalGraph& graph() const { return graph_; }
  const DataProfile& profile() const { return profile_; }
  const TrainConfig& config() const { return config_; }
  Index latent_dim() const { return config_.latent_dim; }
  const std::string& latent() const { return latent_; }
  const std::string& sensitive() const { return sensitive_; }
  /// Nodes q(z|.) reads, and nodes with a generative network, both in topological order.
  const std::vector<std::string>& inference_inputs() const { return inference_nodes_; }
  std::vector<std::string> modeled_nodes() const;

  nnet::ParamStore& params() { return store_; }
  const nnet::ParamStore& params() const { return store_; }
  const nnet::Mlp& inference_net() const { return inference_; }
  const nnet::Mlp& generative_net(const std::string& node) const;

  void initialize(std::uint64_t seed);

  Posterior infer(const Dataset& d) const;

  /// Monte-Carlo ELBO terms, averaged over records, with `n_mc_samples` draws.
  ElboTerms elbo(const Dataset& d, std::uint64_t seed) const;
  /// ELBO terms at fixed standard-normal draws (one D_z x n matrix per MC sample).
  /// With `accumulate`, adds d(-mean ELBO)/d params into params().grads().
  ElboTerms elbo_at(const Dataset& d, const std::vector<MatrixXd>& eps, bool accumulate);

  /// Decoded values (n x columns) of all modeled nodes. `a_for_node` is consulted per node
  /// for the branch selector; base nodes are copied from `d`.
  std::map<std::string, MatrixXd> decode(const Dataset& d, const MatrixXd& z,
                                         const std::function<VectorXd(const std::string&)>& a_for_node,
                                         DecodeMode mode, Rng& rng) const;

  nlohmann::json checkpoint() const;
  static CevaeModel from_checkpoint(const nlohmann::json& doc);

 private:
  struct NodeNet {
    std::string node;
    graph::Role role = graph::Role::Other;
    std::vector<std::string> inputs;  // parents without the sensitive node; latent first
    bool tar = false;
    std::vector<nnet::HeadSpec> heads;
    std::vector<std::vector<Index>> head_columns;  // indices into profile_
    nnet::Mlp net;
  };
  struct Prepared;

  Prepared prepare(const Dataset& d) const;
  MatrixXd encode(const std::string& node, const MatrixXd& block) const;  // block n x cols -> features x n
  Index encoded_width(const std::string& node) const;
  std::vector<Index> node_profile_columns(const std::string& node) const;
  MatrixXd net_input(const NodeNet& nn, const MatrixXd& z, const std::map<std::string, MatrixXd>& enc) const;
  ElboTerms run_elbo(const Prepared& p, const std::vector<MatrixXd>& eps, bool accumulate);

  graph::CausalGraph graph_;
  DataProfile profile_;
  TrainConfig config_;
  std::string sensitive_, latent_;
  std::vector<std::string> inference_nodes_;
  nnet::ParamStore store_;
  nnet::Mlp inference_;
  std::vector<NodeNet> nets_;
};

using EpochHook = std::function<void(Index epoch, const ElboTerms& terms, const CevaeModel& model)>;

/// Adam on -ELBO over shuffled mini-batches; returns the epoch-averaged training terms.
/// A non-finite loss restores the parameters of the last completed epoch and rethrows.
std::vector<ElboTerms> train(CevaeModel& model, const Dataset& d, const EpochHook& hook = {});

/// One row per epoch; a latent_gap column is added when `latent_gap` is given.
void write_epoch_log(const std::vector<ElboTerms>& log, const std::filesystem::path& csv,
                     const std::vector<double>& latent_gap = {});

/// Factual reconstruction: z from the posterior (mean or one draw), then every modeled node decoded.
Dataset reconstruct(const CevaeModel& m, const Dataset& d, DecodeMode mode, std::uint64_t seed);
/// Same z as `reconstruct` for the same seed; every branch selector and the a column follow `policy`.
Dataset counterfactual_reconstruct(const CevaeModel& m, const Dataset& d, const APolicy& policy, DecodeMode mode,
                                   std::uint64_t seed);

/// R* per record: covariates decoded with `a_base`, resolving nodes decoded from those with the
/// observed a, or `a_resolving` when given (posterior-mean z unless `z` is given). n x |R columns|.
MatrixXd nested_r_star(const CevaeModel& m, const Dataset& d, const VectorXd& a_base,
                       DecodeMode mode = DecodeMode::Mean, std::uint64_t seed = 0,
                       const std::optional<MatrixXd>& z = std::nullopt,
                       const std::optional<VectorXd>& a_resolving = std::nullopt);

}  // namespace fairtrade::cevae
