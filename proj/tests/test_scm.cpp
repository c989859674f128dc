#include <doctest.h>

#include "fairtrade/scm.hpp"
#include "fairtrade/stats.hpp"

#include <filesystem>

using namespace fairtrade;
using namespace fairtrade::scm;

namespace {

graph::DirectedPath P(std::string_view s) { return graph::parse_path(s); }

VectorXd column(const Sample& s, const Scm& m, const std::string& node, Index k = 0) {
  return s.value(m, node).col(k);
}

// mean and standard error of x over rows where mask holds
std::pair<double, double> masked_moments(const VectorXd& x, const Eigen::Array<bool, Eigen::Dynamic, 1>& mask) {
  double s = 0, ss = 0;
  Index n = 0;
  for (Index i = 0; i < x.size(); ++i)
    if (mask(i)) {
      s += x(i);
      ss += x(i) * x(i);
      ++n;
    }
  const double m = s / n;
  const double var = (ss - n * m * m) / (n - 1);
  return {m, std::sqrt(var / n)};
}

Scm chain(double alpha, double beta, double gamma, double slope_sd) {
  graph::CausalGraph g;
  g.add_node("A", graph::Role::Sensitive);
  g.add_node("X", graph::Role::Covariate);
  g.add_node("Y", graph::Role::Outcome);
  g.add_edge("A", "X");
  g.add_edge("X", "Y");
  if (gamma != 0.0) g.add_edge("A", "Y");
  LinearGaussianSpec spec;
  spec.coefficients = {{{"A", "X"}, alpha}, {{"X", "Y"}, beta}};
  if (gamma != 0.0) spec.coefficients[{"A", "Y"}] = gamma;
  spec.slope_sd = slope_sd;
  return linear_gaussian(g, spec);
}

}  // namespace

TEST_CASE("appendix process moments") {
  const Scm m = appendix_dgp();
  const Sample s = sample(m, 100000, 1);
  const VectorXd a = column(s, m, "A"), z = column(s, m, "Z");
  CHECK(std::abs(a.mean() - 0.5) < 0.005);
  for (double av : {0.0, 1.0}) {
    const auto mask = (a.array() == av).eval();
    const auto [m1, se1] = masked_moments(column(s, m, "X", 0), mask);
    const auto [m3, se3] = masked_moments(column(s, m, "X", 2), mask);
    CHECK(std::abs(m1 + (1.5 + av)) < 4 * se1);
    CHECK(std::abs(m3 - (1.5 + av)) < 4 * se3);
  }
  const auto all = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(a.size(), true);
  const auto [m2, se2] = masked_moments(column(s, m, "X", 1), all);
  CHECK(std::abs(m2) < 4 * se2);

  const auto near0 = ((a.array() == 0.0) && (z.array().abs() < 0.1)).eval();
  CHECK(masked_moments(column(s, m, "X", 0), near0).first == doctest::Approx(-1.5).epsilon(0.05));
}

TEST_CASE("sampling is deterministic per seed") {
  const Scm m = appendix_dgp();
  const Dataset a = sample_dataset(m, 1, 99), b = sample_dataset(m, 1, 99);
  CHECK(a.values() == b.values());
  CHECK(a.noise() == b.noise());
  CHECK(sample_dataset(m, 1, 100).values() != a.values());
  CHECK_THROWS_AS(sample_dataset(m, 0, 1), ContractError);
}

TEST_CASE("dataset carries roles, kinds and noise") {
  const Dataset d = sample_dataset(appendix_dgp(), 5, 3);
  CHECK(d.columns().size() == 6);
  CHECK(d.node_columns("X").size() == 3);
  CHECK_FALSE(d.columns()[d.node_columns("Z")[0]].observed);
  CHECK(d.columns()[d.column_index("Y")].kind == ColumnKind::Bernoulli);
  CHECK(d.has_noise());
  CHECK(d.noise_names().size() == 6);
}

TEST_CASE("interventions") {
  const Scm m = appendix_dgp();
  SUBCASE("do(a=1) shifts the third covariate") {
    const Dataset d = intervene_sample(m, set_value("A", 1.0), 100000, 5);
    const VectorXd x3 = d.node_block("X").col(2);
    const double se = std::sqrt((x3.array() - x3.mean()).square().sum() / (x3.size() - 1) / x3.size());
    CHECK(std::abs(x3.mean() - 2.5) < 4 * se);
  }
  SUBCASE("do on the outcome fixes it") {
    const Dataset d = intervene_sample(m, set_value("Y", 1.0), 1000, 5);
    CHECK((d.node_block("Y").array() == 1.0).all());
  }
  SUBCASE("do on an unconfounded root matches conditioning") {
    const Dataset d = intervene_sample(m, set_value("A", 1.0), 4000, 21);
    const Sample obs = sample(m, 8000, 22);
    std::vector<double> cond, done;
    for (Index i = 0; i < obs.rows(); ++i)
      if (column(obs, m, "A")(i) == 1.0) cond.push_back(column(obs, m, "X", 2)(i));
    for (Index i = 0; i < d.rows(); ++i) done.push_back(d.node_block("X")(i, 2));
    CHECK(stats::ks_two_sample(cond, done).p_value > 0.01);
  }
  SUBCASE("noise and unknown nodes are rejected") {
    CHECK_THROWS_AS(intervene_sample(m, set_value("U_A[0]", 1.0), 10, 1), ContractError);
    CHECK_THROWS_AS(intervene_sample(m, set_value("Q", 1.0), 10, 1), ContractError);
    CHECK_THROWS_AS(intervene_sample(m, {{"X", MatrixXd::Zero(1, 2)}}, 10, 1), ContractError);
  }
}

TEST_CASE("counterfactual records") {
  const Scm m = appendix_dgp();
  const Dataset d = sample_dataset(m, 500, 8);
  SUBCASE("factual intervention is the identity") {
    const Dataset cf = counterfactual_record(m, d, {{"A", d.node_block("A")}});
    CHECK(cf.values() == d.values());
  }
  SUBCASE("flipping a leaves the z-only covariate unchanged") {
    const MatrixXd flipped = (1.0 - d.node_block("A").array()).matrix();
    const Dataset cf = counterfactual_record(m, d, {{"A", flipped}});
    CHECK(cf.node_block("X").col(1) == d.node_block("X").col(1));
    CHECK(cf.node_block("X").col(0) != d.node_block("X").col(0));
    CHECK(cf.node_block("Z") == d.node_block("Z"));
  }
  SUBCASE("missing noise is an error") {
    Dataset bare = d;
    bare.drop_noise();
    CHECK_THROWS_AS(counterfactual_record(m, bare, set_value("A", 1.0)), ContractError);
  }
  SUBCASE("csv round trip preserves exact abduction") {
    const auto dir = std::filesystem::temp_directory_path() / "fairtrade_scm_rt";
    std::filesystem::create_directories(dir);
    write_dataset(d, dir / "d.csv", dir / "d.schema.json", true);
    const Dataset back = read_dataset(dir / "d.csv", dir / "d.schema.json");
    CHECK(back.values() == d.values());
    const auto iv = set_value("A", 1.0);
    CHECK(counterfactual_record(m, back, iv).values() == counterfactual_record(m, d, iv).values());
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("linear flip changes y by the path coefficient product") {
  const Scm m = chain(2.0, 3.0, 0.0, 0.0);
  const Sample s = sample(m, 200, 4);
  const Sample zero = counterfactual(m, s, set_value("A", 0.0));
  const Sample one = counterfactual(m, s, set_value("A", 1.0));
  const VectorXd dy = column(one, m, "Y") - column(zero, m, "Y");
  CHECK((dy.array() - 6.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("nested values on linear fig1c agree with a hand-assembled oracle") {
  const Scm m = builtin_scm("linear-fig1c");
  const Sample s = sample(m, 300, 17);
  const Index n = s.rows();
  const MatrixXd a1 = MatrixXd::Ones(n, 1), a0 = MatrixXd::Zero(n, 1);
  NestedWorld w(m, s, {P("A>R>Y")}, VectorXd::Ones(1), VectorXd::Zero(1));

  auto run = [&](const std::string& node, const std::vector<const MatrixXd*>& parents) {
    const auto& mech = m.mechanism(node);
    return MatrixXd(mech.evaluate(ParentValues(mech.parents, parents), s.noise[m.index(node)]));
  };
  // Mechanism parent order is A, B, X, Z for R and A, B, R, X, Z for Y.
  const MatrixXd& b = s.value(m, "B");
  const MatrixXd& z = s.value(m, "Z");
  const MatrixXd x0 = run("X", {&a0, &b, &z});
  const MatrixXd r_mixed = run("R", {&a1, &b, &x0, &z});
  const MatrixXd y_pi = run("Y", {&a0, &b, &r_mixed, &x0, &z});
  CHECK((w.outcome() - y_pi).cwiseAbs().maxCoeff() < 1e-12);

  // An input read as a predictor in Y's place follows the same routing.
  CHECK((w.input("R") - r_mixed).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((w.input("X") - x0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(w.input("B") == b);
}

TEST_CASE("path-specific effects") {
  SUBCASE("resolving path on linear fig1c equals the coefficient product") {
    const Scm m = builtin_scm("linear-fig1c");
    const auto e = pse(m, {{P("A>R>Y")}, 1.0, 0.0}, 100000, 2);
    CHECK(e.std_error > 0.0);
    CHECK(std::abs(e.value - 1.0 * 2.0) < 3 * e.std_error);
  }
  SUBCASE("all paths give the total effect") {
    const Scm m = builtin_scm("linear-fig1c");
    const auto all = graph::enumerate_paths(m.graph());
    const auto e = pse(m, {{all.begin(), all.end()}, 1.0, 0.0}, 20000, 3);
    const Sample s = sample(m, 20000, 3);
    const double total =
        (column(counterfactual(m, s, set_value("A", 1.0)), m, "Y") - column(counterfactual(m, s, set_value("A", 0.0)), m, "Y"))
            .mean();
    CHECK(e.value == doctest::Approx(total).epsilon(1e-12));
  }
  SUBCASE("mediated chain effect") {
    const Scm m = chain(2.0, 3.0, 1.0, 0.2);
    const auto e = pse(m, {{P("A>X>Y")}, 1.0, 0.0}, 100000, 4);
    CHECK(std::abs(e.value - 6.0) < 3 * e.std_error);
    const auto d = pse(m, {{P("A>Y")}, 1.0, 0.0}, 100000, 4);
    CHECK(std::abs(d.value - 1.0) < 3 * d.std_error);
  }
  SUBCASE("singleton effects add up to the total") {
    const Scm m = chain(2.0, 3.0, 1.0, 0.2);
    const auto x = pse(m, {{P("A>X>Y")}, 1.0, 0.0}, 5000, 6);
    const auto y = pse(m, {{P("A>Y")}, 1.0, 0.0}, 5000, 6);
    const auto t = pse(m, {{P("A>X>Y"), P("A>Y")}, 1.0, 0.0}, 5000, 6);
    CHECK(std::abs(x.value + y.value - t.value) < 1e-9);
  }
  SUBCASE("standard error shrinks with the square root of n") {
    const Scm m = chain(2.0, 3.0, 1.0, 0.2);
    const auto small = pse(m, {{P("A>X>Y")}, 1.0, 0.0}, 10000, 8);
    const auto large = pse(m, {{P("A>X>Y")}, 1.0, 0.0}, 40000, 8);
    CHECK(small.std_error / large.std_error == doctest::Approx(2.0).epsilon(0.1));
  }
  SUBCASE("non-identifiable sets name the witness") {
    const Scm m = builtin_scm("linear-fig1c");
    try {
      pse(m, {{P("A>X>Y")}, 1.0, 0.0}, 100, 1);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("'X'") != std::string::npos);
    }
    CHECK_THROWS_AS(pse(m, {{P("A>B>Y")}, 1.0, 0.0}, 100, 1), ContractError);
  }
}

TEST_CASE("appendix mechanism details") {
  const AppendixDgpParams p;
  const Scm m = appendix_dgp(p);
  SUBCASE("covariate sd floor") {
    const auto& mech = m.mechanism("X");
    const MatrixXd a = MatrixXd::Zero(1, 1), z = MatrixXd::Constant(1, 1, -3.0);
    const MatrixXd x = mech.evaluate(ParentValues(mech.parents, {&a, &z}), MatrixXd::Ones(1, 3));
    CHECK(x(0, 1) == doctest::Approx(-3.0 + 0.1));
  }
  SUBCASE("direct sensitive term in the outcome logit") {
    const MatrixXd x = MatrixXd::Constant(1, 3, 0.4);
    const VectorXd z = VectorXd::Constant(1, 0.2);
    const double diff = appendix_logit(p, VectorXd::Ones(1), x, z)(0) - appendix_logit(p, VectorXd::Zero(1), x, z)(0);
    CHECK(diff == doctest::Approx(3.0));
  }
  SUBCASE("flat logit gives a fair coin") {
    AppendixDgpParams flat;
    flat.theta_a = flat.theta_x = flat.theta_z = flat.gamma_y = 0.0;
    CHECK(appendix_logit(flat, VectorXd::Ones(3), MatrixXd::Ones(3, 3), VectorXd::Ones(3)).isZero());
    const Dataset d = sample_dataset(appendix_dgp(flat), 40000, 12);
    CHECK(std::abs(d.node_block("Y").mean() - 0.5) < 4 * 0.5 / 200.0);
  }
  SUBCASE("parameter checks") {
    AppendixDgpParams bad;
    bad.sigma_z = 0.0;
    CHECK_THROWS_AS(appendix_dgp(bad), ContractError);
  }
}

TEST_CASE("semi-synthetic fig2 generator") {
  SUBCASE("default outcome is bimodal") {
    const Scm m = semi_synthetic_fig2();
    const Dataset d = sample_dataset(m, 2000, 31);
    const VectorXd y = d.node_block("Y").col(0);
    CHECK(stats::dip_statistic(stats::as_span(y)) > stats::dip_critical_value(2000, 0.01, 5));

    const Sample s = from_dataset(m, d);
    const VectorXd t = column(s, m, "T");
    double m0 = 0, m1 = 0;
    Index n1 = 0;
    for (Index i = 0; i < y.size(); ++i) {
      if (t(i) == 1.0) {
        m1 += y(i);
        ++n1;
      } else {
        m0 += y(i);
      }
    }
    const double mid = 0.5 * (m0 / static_cast<double>(y.size() - n1) + m1 / static_cast<double>(n1));
    const Sample cf = counterfactual(m, s, {{"T", (1.0 - t.array()).matrix()}});
    const VectorXd ycf = column(cf, m, "Y");
    Index moved = 0;
    for (Index i = 0; i < y.size(); ++i) moved += ((y(i) > mid) != (ycf(i) > mid));
    CHECK(static_cast<double>(moved) / static_cast<double>(y.size()) >= 0.9);
  }
  SUBCASE("no treatment effect gives a unimodal outcome") {
    Fig2Config cfg;
    cfg.treatment_effect = 0.0;
    const Dataset d = sample_dataset(semi_synthetic_fig2(cfg), 2000, 32);
    const VectorXd y = d.node_block("Y").col(0);
    CHECK(stats::dip_statistic(stats::as_span(y)) < stats::dip_critical_value(2000, 0.01, 5));
  }
  SUBCASE("pluggable mechanisms") {
    Fig2Config cfg;
    cfg.overrides["T"] = {{"Z"}, 1, 1, {ColumnKind::Bernoulli}, 0,
                          [](Rng& rng, Index n) { return standard_uniform(rng, n, 1); },
                          [](const ParentValues& pv, const MatrixXd& u) {
                            return MatrixXd((u.array() < sigmoid(pv["Z"].array())).cast<double>());
                          }};
    CHECK_NOTHROW(sample_dataset(semi_synthetic_fig2(cfg), 10, 1));
    cfg.overrides["T"].parents = {"X"};
    CHECK_THROWS_AS(semi_synthetic_fig2(cfg), ContractError);
  }
}

TEST_CASE("mechanism parents must match the graph") {
  const auto g = graph::builtin("fig1a");
  LinearGaussianSpec spec;
  Scm ok = linear_gaussian(g, spec);
  std::map<std::string, Mechanism> mechs;
  for (const auto& node : ok.order()) mechs[node] = ok.mechanism(node);
  mechs["X"].parents = {"A"};
  CHECK_THROWS_AS(Scm(g, mechs), ContractError);
  mechs.erase("X");
  CHECK_THROWS_AS(Scm(g, mechs), ContractError);
  spec.coefficients[{"Y", "A"}] = 1.0;
  CHECK_THROWS_AS(linear_gaussian(g, spec), ContractError);
}

TEST_CASE("builtin scm catalogue") {
  for (const auto& name : builtin_scm_names()) CHECK_NOTHROW(sample_dataset(builtin_scm(name), 3, 1));
  CHECK_THROWS_AS(builtin_scm("nope"), ContractError);
}
