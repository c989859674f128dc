#include <doctest.h>

#include "fairtrade/cevae.hpp"
#include "fairtrade/metrics.hpp"
#include "fairtrade/scm.hpp"

using namespace fairtrade;
using namespace fairtrade::metrics;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

VectorXd squash(const MatrixXd& x) {
  return x.rowwise().sum().unaryExpr([](double v) { return sigmoid(0.3 * v); });
}

}  // namespace

TEST_CASE("statistical parity on hand-computed groups") {
  // group 0: 3 of 10 positive, group 1: 5 of 10
  VectorXd y(20), a(20);
  for (Index i = 0; i < 20; ++i) {
    a(i) = i < 10 ? 0.0 : 1.0;
    y(i) = (i < 3 || (i >= 10 && i < 15)) ? 0.9 : 0.1;
  }
  CHECK(statistical_parity_score(y, a) == doctest::Approx(0.8));
  const VectorXd swapped = (1.0 - a.array()).matrix();
  CHECK(statistical_parity_score(y, swapped) == doctest::Approx(0.8));
  CHECK(statistical_parity_score(VectorXd::Constant(20, 0.7), a) == 1.0);
  CHECK(statistical_parity_score(a, a) == 0.0);
}

TEST_CASE("statistical parity thresholds at one half") {
  CHECK(statistical_parity_score(vec({0.5, 0.49}), vec({0, 1})) == 0.0);
  CHECK(statistical_parity_score(vec({0.5, 0.51}), vec({0, 1})) == 1.0);
}

TEST_CASE("statistical parity rejects degenerate groups") {
  CHECK_THROWS_AS(statistical_parity_score(vec({0.1, 0.2}), vec({1, 1})), ContractError);
  CHECK_THROWS_AS(statistical_parity_score(vec({0.1, 0.2}), vec({0, 2})), ContractError);
  CHECK_THROWS_AS(statistical_parity_score(vec({0.1}), vec({0, 1})), ContractError);
}

TEST_CASE("cf score modes") {
  const VectorXd f = vec({1.0, 0.0, 0.6, 0.2}), cf = vec({0.0, 0.0, 0.4, 0.3});
  CHECK(cf_score(f, f) == 1.0);
  CHECK(cf_score(f, cf, CfMode::MeanAbs) == doctest::Approx(1.0 - (1.0 + 0.0 + 0.2 + 0.1) / 4.0));
  CHECK(cf_score(f, cf, CfMode::FlipRate) == doctest::Approx(0.5));
  CHECK(cf_score(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK_THROWS_AS(cf_score(f, vec({1.0})), ContractError);
  CHECK_THROWS_AS(cf_score(VectorXd(), VectorXd()), ContractError);
  CHECK(cf_mode_from_string(to_string(CfMode::FlipRate)) == CfMode::FlipRate);
  CHECK_THROWS_AS(cf_mode_from_string("l2"), ContractError);
}

TEST_CASE("oracle cf of a predictor reading only non-descendants is one") {
  const auto s = scm::fig1c_synthetic();
  const auto r = oracle_cf(column_predictor({"B[0]", "B[1]", "Z[0]", "Z[1]"}, squash), s, 2000, 3);
  CHECK(r.value == 1.0);
  CHECK(r.stderr_ == 0.0);
  CHECK(r.n == 2000);
  CHECK(r.metric == "oracle_cf");
}

TEST_CASE("oracle cf of the sensitive indicator is zero") {
  const auto s = scm::fig1c_synthetic();
  const auto r = oracle_cf(column_predictor({"A"}, [](const MatrixXd& x) { return VectorXd(x.col(0)); }), s, 500, 1);
  CHECK(r.value == 0.0);
}

TEST_CASE("oracle cf falls for a predictor reading descendants of A") {
  const auto s = scm::builtin_scm("linear-fig1c");
  const auto r = oracle_cf(column_predictor({"X", "R"}, squash), s, 2000, 2);
  CHECK(r.value < 0.95);
  CHECK(r.value > 0.0);
  CHECK(r.stderr_ > 0.0);
}

TEST_CASE("path-specific score with every path active equals the oracle cf") {
  for (const char* name : {"linear-fig1c", "fig1c"}) {
    CAPTURE(name);
    const auto s = scm::builtin_scm(name);
    const auto pred = column_predictor(name == std::string("fig1c") ? std::vector<std::string>{"X[0]", "R[0]", "R[1]"}
                                                                    : std::vector<std::string>{"X", "R"},
                                       squash);
    const auto all = graph::enumerate_paths(s.graph());
    const graph::PathSet every(all.begin(), all.end());
    const auto full = oracle_cf(pred, s, 1500, 9);
    const auto nested = oracle_pscf(pred, s, every, 1500, 9);
    CHECK(nested.value == doctest::Approx(full.value).epsilon(1e-12));
    CHECK(nested.metric == "oracle_pscf");
  }
}

TEST_CASE("path-specific score with no active path is one") {
  const auto s = scm::builtin_scm("linear-fig1c");
  const auto r = oracle_pscf(column_predictor({"X", "R"}, squash), s, {}, 800, 4);
  CHECK(r.value == doctest::Approx(1.0));
}

TEST_CASE("path-specific score blocks inactive routes") {
  // only A>R>Y active: X keeps its factual value, R moves by the direct A->R effect
  const auto s = scm::builtin_scm("linear-fig1c");
  const auto paths = graph::parse_path_set("A>R>Y");
  CHECK(oracle_pscf(column_predictor({"X"}, squash), s, paths, 1000, 5).value == doctest::Approx(1.0));
  CHECK(oracle_pscf(column_predictor({"R"}, squash), s, paths, 1000, 5).value < 1.0);
}

TEST_CASE("path-specific score refuses non-identifiable and foreign paths") {
  const auto s = scm::builtin_scm("linear-fig1c");
  const auto pred = column_predictor({"X"}, squash);
  try {
    oracle_pscf(pred, s, graph::parse_path_set("A>X>Y"), 100, 1);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("'X'") != std::string::npos);
  }
  CHECK_THROWS_AS(oracle_pscf(pred, s, graph::parse_path_set("A>B>Y"), 100, 1), ContractError);
}

TEST_CASE("oracle predictions outside [0,1] are rejected") {
  const auto s = scm::builtin_scm("linear-fig1c");
  CHECK_THROWS_AS(oracle_cf(column_predictor({"X"}, [](const MatrixXd& x) { return VectorXd(x.col(0)); }), s, 200, 1),
                  ContractError);
}

TEST_CASE("metric report serializes its fields") {
  MetricReport r{"oracle_cf", "mean_abs", 0.75, 10, 3, 0.01};
  const auto j = to_json(r);
  CHECK(j.at("metric") == "oracle_cf");
  CHECK(j.at("mode") == "mean_abs");
  CHECK(j.at("value").get<double>() == 0.75);
  CHECK(j.at("n") == 10);
  CHECK(j.at("seed") == 3);
  CHECK(j.at("stderr").get<double>() == 0.01);
}

TEST_CASE("latent gap compares posterior means across groups") {
  auto d = scm::sample_dataset(scm::fig1c_synthetic(), 300, 2);
  d.drop_noise();
  cevae::TrainConfig cfg;
  cfg.hidden_width = 4;
  cfg.latent_dim = 2;
  const auto m = cevae::CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  const auto g = latent_gap(m, d);
  const auto post = m.infer(d);
  const VectorXd a = d.node_block("A").col(0);
  RowVectorXd s0 = RowVectorXd::Zero(2), s1 = s0;
  double n0 = 0, n1 = 0;
  for (Index i = 0; i < a.size(); ++i) (a(i) == 0.0 ? (n0 += 1, s0) : (n1 += 1, s1)) += post.mean.row(i);
  const RowVectorXd expect = (s0 / n0 - s1 / n1).cwiseAbs();
  REQUIRE(g.per_dim.size() == 2);
  CHECK(g.per_dim(0) == doctest::Approx(expect(0)));
  CHECK(g.per_dim(1) == doctest::Approx(expect(1)));
  CHECK(g.max == doctest::Approx(expect.maxCoeff()));

  auto one = d.select_rows({0});
  CHECK_THROWS_AS(latent_gap(m, one), ContractError);
}
