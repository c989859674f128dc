#pragma once

// Group and counterfactual fairness scores.

#include "fairtrade/core.hpp"
#include "fairtrade/dataset.hpp"
#include "fairtrade/graph.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <string>

namespace fairtrade::cevae {
class CevaeModel;
}
namespace fairtrade::scm {
class Scm;
}

namespace fairtrade::metrics {

/// 1 - |P(round(y)=1 | a=0) - P(round(y)=1 | a=1)|.
double statistical_parity_score(const VectorXd& y_hat, const VectorXd& a);

enum class CfMode { MeanAbs, FlipRate };
std::string to_string(CfMode m);
CfMode cf_mode_from_string(const std::string& s);

/// mean_abs: 1 - mean |f - cf|; flip_rate: fraction of records whose rounded prediction is unchanged.
double cf_score(const VectorXd& y_factual, const VectorXd& y_counterfactual, CfMode mode = CfMode::MeanAbs);

/// Records handed to an oracle-world predictor.
struct OracleRecords {
  const Dataset* records = nullptr;  // values as the predictor reads them
  const Dataset* factual = nullptr;  // the factual records they derive from
  /// Sensitive value carried along each edge A -> child, per record.
  std::map<std::string, VectorXd> a_at;
};
using Predictor = std::function<VectorXd(const OracleRecords&)>;

/// Predictor over plain columns of the scored records.
Predictor column_predictor(std::vector<std::string> columns, std::function<VectorXd(const MatrixXd&)> f);

struct MetricReport {
  std::string metric;
  std::string mode;
  double value = 0.0;
  Index n = 0;
  std::uint64_t seed = 0;
  double stderr_ = 0.0;
};
nlohmann::json to_json(const MetricReport& r);

/// cf_score(mean_abs) between factual records and exact counterfactuals with a flipped.
MetricReport oracle_cf(const Predictor& predictor, const scm::Scm& scm, Index n, std::uint64_t seed);
/// Same, with the flipped value travelling only along `paths`; ValidationError if not identifiable.
MetricReport oracle_pscf(const Predictor& predictor, const scm::Scm& scm, const graph::PathSet& paths, Index n,
                         std::uint64_t seed);

struct LatentGap {
  VectorXd per_dim;
  double max = 0.0;
};
/// |mean(mu | a=0) - mean(mu | a=1)| of the posterior means.
LatentGap latent_gap(const cevae::CevaeModel& m, const Dataset& d);

}  // namespace fairtrade::metrics
