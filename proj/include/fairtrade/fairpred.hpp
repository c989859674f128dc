#pragma once

// Auxiliary predictors whose input selection decides which causal paths
// from the sensitive variable can reach the prediction.

#include "fairtrade/cevae.hpp"
#include "fairtrade/core.hpp"
#include "fairtrade/dataset.hpp"
#include "fairtrade/metrics.hpp"
#include "fairtrade/nnet.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace fairtrade::fairpred {

enum class Feature { Z, B, R, X, A, RStar };
std::string to_string(Feature f);

struct InputSelection {
  std::vector<Feature> items;
  std::optional<double> base_a;  // required with R*

  /// "Z,B,R*"; `base_a` is attached when given.
  static InputSelection parse(const std::string& text, std::optional<double> base_a = std::nullopt);
  std::string to_string() const;
  bool contains(Feature f) const;
  /// R and R* exclusive, no duplicates, R* needs a base value, nodes present in `g`.
  void validate(const graph::CausalGraph& g) const;
};

/// The selections swept in order of increasing information.
std::vector<InputSelection> default_sweep(double base_a);

struct FeatureOptions {
  /// Records the posterior of Z is inferred from; defaults to the scored records.
  const Dataset* abduction = nullptr;
  /// Sensitive value fed to the resolving decoders for R*; defaults to the records' a column.
  std::optional<VectorXd> a_at_resolving;
  bool sample_z = false;
  std::uint64_t seed = 0;
};

/// n x width feature matrix, in selection order.
MatrixXd build_inputs(const cevae::CevaeModel& m, const Dataset& d, const InputSelection& sel,
                      const FeatureOptions& opt = {});
Index selection_width(const cevae::CevaeModel& m, const InputSelection& sel);

/// Observed non-outcome, non-latent columns in table order; the sensitive column optional.
std::vector<std::string> raw_feature_columns(const Dataset& d, bool include_sensitive = true);
MatrixXd columns_matrix(const Dataset& d, const std::vector<std::string>& names);
VectorXd outcome_labels(const Dataset& d);

struct AuxConfig {
  Index hidden_width = 100;  // 0 gives logistic regression
  double learning_rate = 1e-3;
  Index epochs = 30;
  Index batch_size = 128;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const AuxConfig& c);
AuxConfig aux_config_from_json(const nlohmann::json& j);

class AuxModel {
 public:
  AuxModel() = default;
  AuxModel(Index input_dim, Index hidden_width);

  const nnet::MlpSpec& spec() const { return net_.spec(); }
  Index input_dim() const { return net_.spec().input_dim; }
  nnet::ParamStore& params() { return store_; }
  const nnet::ParamStore& params() const { return store_; }
  const nnet::Mlp& net() const { return net_; }

  /// Features are standardized with the training moments before entering the network.
  VectorXd feature_mean, feature_scale;
  std::vector<double> loss_curve;
  std::vector<std::string> warnings;

  /// Mean binary cross-entropy; adds its parameter gradient when `accumulate`.
  double bce(const MatrixXd& features, const VectorXd& labels, bool accumulate);

 private:
  nnet::ParamStore store_;
  nnet::Mlp net_;
};

/// RMSprop on mean binary cross-entropy over shuffled mini-batches.
AuxModel train_aux(const MatrixXd& features, const VectorXd& labels, const AuxConfig& cfg);
VectorXd predict(const AuxModel& m, const MatrixXd& features);
double accuracy(const AuxModel& m, const MatrixXd& features, const VectorXd& labels);
double accuracy(const VectorXd& probabilities, const VectorXd& labels);

nlohmann::json to_json(const AuxModel& m);
AuxModel aux_model_from_json(const nlohmann::json& j);

struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> values;
};
Summary summarize(std::vector<double> values);

struct BaselineTable {
  Summary mlp, lr;
};

/// MLP and logistic regression on the raw observed features (sensitive column included),
/// each over `reps` random splits with `test_fraction` held out.
BaselineTable baselines(const Dataset& d, const AuxConfig& cfg, Index reps = 20, double test_fraction = 0.1);

struct SweepRow {
  InputSelection selection;
  Summary accuracy;
  Summary sp_score;
};

/// For each selection and repetition: random split of `d`, aux model on the training part,
/// accuracy and statistical parity on the held-out part. The CEVAE stays fixed.
std::vector<SweepRow> sweep(const cevae::CevaeModel& m, const Dataset& d, const std::vector<InputSelection>& selections,
                            const AuxConfig& cfg, Index reps, double test_fraction = 0.1);

/// Oracle-world predictor: Z from the factual record, R* fed the sensitive value that reaches R.
metrics::Predictor oracle_predictor(const cevae::CevaeModel& m, const AuxModel& aux, const InputSelection& sel);

}  // namespace fairtrade::fairpred
