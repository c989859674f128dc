#pragma once

// Black-box auditing: score a predictor on factual and counterfactual
// reconstructions of the same records.

#include "fairtrade/cevae.hpp"
#include "fairtrade/fairpred.hpp"
#include "fairtrade/forest.hpp"
#include "fairtrade/metrics.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairtrade::audit {

/// The black box could not produce predictions (crash, timeout, malformed output).
class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BlackBox {
 public:
  virtual ~BlackBox() = default;
  virtual std::string name() const = 0;
  /// Input columns, in the order the model reads them.
  virtual const std::vector<std::string>& columns() const = 0;
  /// Probability of class 1 per record.
  virtual VectorXd predict(const Dataset& d) const = 0;
};

class LogisticBox : public BlackBox {
 public:
  LogisticBox(std::string name, std::vector<std::string> columns, fairpred::AuxModel model,
              std::optional<std::pair<Index, double>> fixed = std::nullopt)
      : name_(std::move(name)), columns_(std::move(columns)), model_(std::move(model)), fixed_(fixed) {}
  std::string name() const override { return name_; }
  const std::vector<std::string>& columns() const override { return columns_; }
  VectorXd predict(const Dataset& d) const override;
  const fairpred::AuxModel& model() const { return model_; }
  /// Column index held constant at prediction time, and its value.
  const std::optional<std::pair<Index, double>>& fixed() const { return fixed_; }

 private:
  std::string name_;
  std::vector<std::string> columns_;
  fairpred::AuxModel model_;
  std::optional<std::pair<Index, double>> fixed_;
};

class ForestBox : public BlackBox {
 public:
  ForestBox(std::vector<std::string> columns, forest::RandomForest rf) : columns_(std::move(columns)), rf_(std::move(rf)) {}
  std::string name() const override { return "RF"; }
  const std::vector<std::string>& columns() const override { return columns_; }
  VectorXd predict(const Dataset& d) const override;
  const forest::RandomForest& forest() const { return rf_; }

 private:
  std::vector<std::string> columns_;
  forest::RandomForest rf_;
};

/// Runs `command` through /bin/sh; the selected columns go to its standard input as CSV with a
/// header row, and it must print one probability per record on standard output.
class ExternalBox : public BlackBox {
 public:
  ExternalBox(std::string command, std::vector<std::string> columns, double timeout_seconds = 60.0)
      : command_(std::move(command)), columns_(std::move(columns)), timeout_(timeout_seconds) {}
  std::string name() const override { return "cmd:" + command_; }
  const std::vector<std::string>& columns() const override { return columns_; }
  VectorXd predict(const Dataset& d) const override;

 private:
  std::string command_;
  std::vector<std::string> columns_;
  double timeout_;
};

struct ProcessResult {
  int exit_status = -1;  // -1 when killed
  bool timed_out = false;
  std::string out, err;
};
/// Feeds `input` to `/bin/sh -c command` and collects its output.
ProcessResult run_process(const std::string& command, const std::string& input, double timeout_seconds);

std::shared_ptr<LogisticBox> train_lr(const Dataset& train, const std::vector<std::string>& columns,
                                      const fairpred::AuxConfig& cfg);
/// LR whose sensitive input is replaced by its training mean at prediction time.
std::shared_ptr<LogisticBox> train_lr_fixed_a(const Dataset& train, const std::vector<std::string>& columns,
                                              const std::string& sensitive_column, const fairpred::AuxConfig& cfg);
std::shared_ptr<ForestBox> train_rf(const Dataset& train, const std::vector<std::string>& columns,
                                    const forest::ForestConfig& cfg);

struct SanityResult {
  double accuracy_original = 0.0;
  double accuracy_reconstructed = 0.0;
  std::optional<std::string> warning;
};
inline constexpr double kSanityTolerance = 0.05;
/// Accuracy on the original records against their labels, and on the reconstructed records
/// against the reconstructed labels (rounded).
SanityResult sanity_check(const BlackBox& box, const Dataset& original, const Dataset& reconstructed,
                          const VectorXd& labels_original, const VectorXd& labels_reconstructed,
                          double tolerance = kSanityTolerance);

struct AuditConfig {
  Index reps = 20;
  cevae::DecodeMode mode = cevae::DecodeMode::Sample;
  std::uint64_t seed = 0;
};

struct AuditReport {
  std::string model;
  Index n = 0;
  Index reps = 0;
  std::uint64_t seed = 0;
  std::string decode_mode;
  fairpred::Summary cf_mean_abs;          // on probabilities
  fairpred::Summary cf_flip_rate;
  fairpred::Summary cf_mean_abs_rounded;  // on rounded labels
  fairpred::Summary sp_factual;
  fairpred::Summary accuracy_reconstructed;
  double accuracy_original = 0.0;
  std::optional<std::string> warning;
};
nlohmann::json to_json(const AuditReport& r);

/// Per repetition: factual and switched-a reconstructions from a fresh latent/decoder draw,
/// the black box scored on both.
AuditReport run_audit(const cevae::CevaeModel& m, const Dataset& test, const BlackBox& box, const AuditConfig& cfg);

}  // namespace fairtrade::audit
