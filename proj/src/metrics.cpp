#include "fairtrade/metrics.hpp"

#include "fairtrade/cevae.hpp"
#include "fairtrade/scm.hpp"

#include <algorithm>
#include <cmath>

namespace fairtrade::metrics {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void check_probabilities(const VectorXd& p, const char* what) {
  for (Index i = 0; i < p.size(); ++i)
    if (!(p(i) >= 0.0 && p(i) <= 1.0)) throw ContractError(std::string(what) + " must lie in [0,1]");
}

MetricReport compare(const VectorXd& f, const VectorXd& cf, const std::string& metric, std::uint64_t seed) {
  check_probabilities(f, "predictions");
  check_probabilities(cf, "predictions");
  MetricReport r;
  r.metric = metric;
  r.mode = to_string(CfMode::MeanAbs);
  r.value = cf_score(f, cf, CfMode::MeanAbs);
  r.n = f.size();
  r.seed = seed;
  const Eigen::ArrayXd d = (f - cf).array().abs();
  const double mu = d.mean();
  r.stderr_ = d.size() > 1 ? std::sqrt((d - mu).square().sum() / static_cast<double>(d.size() - 1) /
                                       static_cast<double>(d.size()))
                           : 0.0;
  return r;
}

}  // namespace

double statistical_parity_score(const VectorXd& y_hat, const VectorXd& a) {
  if (y_hat.size() != a.size()) throw ContractError("predictions and sensitive values differ in length");
  double pos[2] = {0, 0}, cnt[2] = {0, 0};
  for (Index i = 0; i < a.size(); ++i) {
    if (a(i) != 0.0 && a(i) != 1.0) throw ContractError("sensitive values must be 0 or 1");
    const int g = static_cast<int>(a(i));
    pos[g] += round_label(y_hat(i));
    cnt[g] += 1.0;
  }
  if (cnt[0] == 0.0 || cnt[1] == 0.0) throw ContractError("statistical parity needs both sensitive groups");
  return clamp01(1.0 - std::abs(pos[0] / cnt[0] - pos[1] / cnt[1]));
}

std::string to_string(CfMode m) { return m == CfMode::MeanAbs ? "mean_abs" : "flip_rate"; }

CfMode cf_mode_from_string(const std::string& s) {
  if (s == "mean_abs") return CfMode::MeanAbs;
  if (s == "flip_rate") return CfMode::FlipRate;
  throw ContractError("unknown cf score mode '" + s + "' (mean_abs, flip_rate)");
}

double cf_score(const VectorXd& f, const VectorXd& cf, CfMode mode) {
  if (f.size() != cf.size() || f.size() == 0) throw ContractError("cf_score needs two equal, non-empty columns");
  if (mode == CfMode::MeanAbs) return clamp01(1.0 - (f - cf).cwiseAbs().mean());
  double same = 0.0;
  for (Index i = 0; i < f.size(); ++i) same += round_label(f(i)) == round_label(cf(i)) ? 1.0 : 0.0;
  return clamp01(same / static_cast<double>(f.size()));
}

Predictor column_predictor(std::vector<std::string> columns, std::function<VectorXd(const MatrixXd&)> f) {
  return [columns = std::move(columns), f = std::move(f)](const OracleRecords& r) {
    MatrixXd x(r.records->rows(), static_cast<Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j)
      x.col(static_cast<Index>(j)) = r.records->values().col(r.records->column_index(columns[j]));
    return f(x);
  };
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"metric", r.metric}, {"mode", r.mode}, {"value", r.value},
          {"n", r.n},           {"seed", r.seed}, {"stderr", r.stderr_}};
}

MetricReport oracle_cf(const Predictor& predictor, const scm::Scm& scm, Index n, std::uint64_t seed) {
  const auto& g = scm.graph();
  const std::string& a_node = g.sensitive();
  const Dataset factual = scm::sample_dataset(scm, n, derive_seed(seed, "oracle-records"));
  const VectorXd a = factual.node_block(a_node).col(0);
  const VectorXd flipped = (1.0 - a.array()).matrix();
  const Dataset cf = scm::counterfactual_record(scm, factual, {{a_node, flipped}});

  OracleRecords fr{&factual, &factual, {}}, cr{&cf, &factual, {}};
  for (const auto& child : g.children(a_node)) {
    fr.a_at[child] = a;
    cr.a_at[child] = flipped;
  }
  return compare(predictor(fr), predictor(cr), "oracle_cf", seed);
}

MetricReport oracle_pscf(const Predictor& predictor, const scm::Scm& scm, const graph::PathSet& paths, Index n,
                         std::uint64_t seed) {
  const auto& g = scm.graph();
  const auto all = graph::enumerate_paths(g);
  for (const auto& p : paths)
    if (std::find(all.begin(), all.end(), p) == all.end())
      throw ContractError("'" + graph::to_string(p) + "' is not a path from the sensitive node to the outcome");
  const auto id = graph::check_identifiability(g, paths);
  if (!id.identifiable)
    throw ValidationError("path set is not identifiable: recanting witness '" + *id.witness + "'");

  const std::string& a_node = g.sensitive();
  const std::string& y_node = g.outcome();
  const scm::Sample fs = scm::sample(scm, n, derive_seed(seed, "oracle-records"));
  const Dataset factual = scm::to_dataset(scm, fs, true);
  const VectorXd a = fs.value(scm, a_node).col(0);
  const VectorXd flipped = (1.0 - a.array()).matrix();

  scm::NestedWorld world(scm, fs, paths, flipped, a);
  scm::Sample nested;
  for (const auto& node : scm.order()) nested.values.push_back(node == y_node ? world.outcome() : world.input(node));
  const Dataset nr = scm::to_dataset(scm, nested, false);

  OracleRecords fr{&factual, &factual, {}}, nrr{&nr, &factual, {}};
  for (const auto& child : g.children(a_node)) {
    fr.a_at[child] = a;
    const graph::DirectedPath through = child == y_node ? graph::DirectedPath{a_node, y_node}
                                                        : graph::DirectedPath{a_node, child, y_node};
    nrr.a_at[child] = world.value(a_node, through).col(0);
  }
  return compare(predictor(fr), predictor(nrr), "oracle_pscf", seed);
}

LatentGap latent_gap(const cevae::CevaeModel& m, const Dataset& d) {
  const auto post = m.infer(d);
  const VectorXd a = d.values().col(d.column_index(d.columns()[d.node_columns(m.sensitive()).at(0)].name));
  RowVectorXd s0 = RowVectorXd::Zero(post.mean.cols()), s1 = s0;
  double n0 = 0.0, n1 = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    if (a(i) == 0.0) {
      s0 += post.mean.row(i);
      n0 += 1.0;
    } else {
      s1 += post.mean.row(i);
      n1 += 1.0;
    }
  }
  if (n0 == 0.0 || n1 == 0.0) throw ContractError("latent gap needs both sensitive groups");
  LatentGap g;
  g.per_dim = (s0 / n0 - s1 / n1).cwiseAbs().transpose();
  g.max = g.per_dim.maxCoeff();
  return g;
}

}  // namespace fairtrade::metrics
