#include <doctest.h>

#include "fairtrade/cevae.hpp"
#include "fairtrade/scm.hpp"

#include <cmath>
#include <limits>

using namespace fairtrade;
using namespace fairtrade::cevae;

namespace {

TrainConfig small_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.hidden_width = 6;
  c.latent_dim = 2;
  c.seed = seed;
  return c;
}

Dataset fig1c_data(Index n, std::uint64_t seed) {
  auto d = scm::sample_dataset(scm::fig1c_synthetic(), n, seed);
  d.drop_noise();
  return d;
}

Dataset appendix_data(Index n, std::uint64_t seed) {
  auto d = scm::sample_dataset(scm::appendix_dgp(), n, seed);
  d.drop_noise();
  return d;
}

std::vector<MatrixXd> draws(Index S, Index D, Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MatrixXd> e;
  for (Index s = 0; s < S; ++s) e.push_back(standard_normal(rng, D, n));
  return e;
}

double elbo_grad_error(CevaeModel& m, const Dataset& d, std::uint64_t seed) {
  const auto eps = draws(m.config().n_mc_samples, m.latent_dim(), d.rows(), seed);
  return nnet::grad_check(m.params(), [&](nnet::ParamStore&) { return -m.elbo_at(d, eps, true).total; });
}

CevaeModel zero_model(const graph::CausalGraph& g, const Dataset& d, TrainConfig cfg) {
  CevaeModel m(g, d.columns(), cfg);
  m.params().values().setZero();
  return m;
}

}  // namespace

TEST_CASE("elbo gradients match finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    auto cfg = small_config(seed);
    cfg.n_mc_samples = 2;
    {
      const auto d = fig1c_data(9, seed);
      auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
      CHECK(elbo_grad_error(m, d, seed + 10) <= 1e-4);
    }
    {
      const auto d = appendix_data(9, seed);
      auto m = CevaeModel::for_dataset(graph::builtin("fig1a"), d, cfg);
      CHECK(elbo_grad_error(m, d, seed + 20) <= 1e-4);
    }
  }
}

TEST_CASE("full-size fig1c elbo gradient") {
  TrainConfig cfg;
  cfg.seed = 4;
  const auto d = fig1c_data(5, 4);
  auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  CHECK(elbo_grad_error(m, d, 44) <= 1e-4);
}

TEST_CASE("model structure on fig1c") {
  const auto d = fig1c_data(20, 1);
  const auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, small_config());
  CHECK(m.latent() == "Z");
  CHECK(m.sensitive() == "A");
  CHECK(m.modeled_nodes() == std::vector<std::string>{"X", "R", "Y"});
  CHECK(std::find(m.inference_inputs().begin(), m.inference_inputs().end(), "Y") == m.inference_inputs().end());
  CHECK(m.generative_net("X").spec().branches == 2);
  CHECK(m.generative_net("Y").spec().heads.size() == 1);
  CHECK(m.generative_net("R").spec().heads.front().kind == nnet::HeadKind::Bernoulli);
  CHECK_THROWS_AS(m.generative_net("B"), ContractError);
}

TEST_CASE("graphs without exactly one latent are rejected") {
  const auto d = fig1c_data(10, 1);
  graph::CausalGraph g;
  g.add_node("A", graph::Role::Sensitive);
  g.add_node("X", graph::Role::Covariate);
  g.add_node("Y", graph::Role::Outcome);
  g.add_edge("A", "X");
  g.add_edge("X", "Y");
  CHECK_THROWS_AS(CevaeModel(g, d.columns(), small_config()), ContractError);
}

TEST_CASE("zero-weight inference gives the clamped softplus posterior") {
  const auto d = fig1c_data(30, 2);
  const auto m = zero_model(graph::builtin("fig1c"), d, small_config());
  const auto post = m.infer(d);
  CHECK(post.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(post.sd.minCoeff() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(post.sd.maxCoeff() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("posterior equal to the prior gives zero regularisation") {
  const auto d = fig1c_data(40, 3);
  auto m = zero_model(graph::builtin("fig1c"), d, small_config());
  auto bias = m.params().param(m.inference_net().output_bias(0));
  const Index D = m.latent_dim();
  bias.bottomRows(D).setConstant(std::log(std::exp(1.0) - 1.0));  // softplus = 1
  const auto t = m.elbo(d, 9);
  CHECK(std::abs(t.reg) <= 1e-12);
}

TEST_CASE("regularisation is non-positive on average and terms sum to the total") {
  const auto d = fig1c_data(3000, 4);
  auto cfg = small_config(4);
  cfg.n_mc_samples = 4;
  const auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  const auto t = m.elbo(d, 5);
  CHECK(t.reg <= 0.0);
  CHECK(t.total == t.reg + t.rec_x + t.rec_r + t.rec_y + t.rec_other);
  CHECK(t.rec_other == 0.0);
}

TEST_CASE("elbo is a lower bound on the exact model log-likelihood") {
  // One latent dimension: the model marginal is integrated on a grid.
  graph::CausalGraph g;
  g.add_node("A", graph::Role::Sensitive);
  g.add_node("Z", graph::Role::Latent, false);
  g.add_node("X", graph::Role::Covariate);
  g.add_node("Y", graph::Role::Outcome);
  g.add_edge("A", "X");
  g.add_edge("Z", "X");
  g.add_edge("Z", "Y");
  g.add_edge("X", "Y");
  const Index n = 200;
  Rng rng(7);
  MatrixXd v(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double a = i % 2, z = std::normal_distribution<double>()(rng);
    const double x = 0.8 * z + a + 0.5 * std::normal_distribution<double>()(rng);
    v.row(i) << a, x, (x + z > 0.5 ? 1.0 : 0.0);
  }
  DataProfile prof = {{"A", "A", graph::Role::Sensitive, ColumnKind::Bernoulli, 0, true},
                      {"X", "X", graph::Role::Covariate, ColumnKind::Gaussian, 0, true},
                      {"Y", "Y", graph::Role::Outcome, ColumnKind::Bernoulli, 0, true}};
  const Dataset d(prof, v);
  TrainConfig cfg = small_config(7);
  cfg.latent_dim = 1;
  cfg.n_mc_samples = 400;
  auto m = CevaeModel::for_dataset(g, d, cfg);

  const Index G = 2001;
  const double lo = -8.0, step = 16.0 / static_cast<double>(G - 1);
  MatrixXd zg(1, G);
  for (Index k = 0; k < G; ++k) zg(0, k) = lo + step * static_cast<double>(k);
  double exact = 0.0;
  const auto& xnet = m.generative_net("X");
  const auto& ynet = m.generative_net("Y");
  for (Index i = 0; i < n; ++i) {
    const std::vector<Index> br(static_cast<std::size_t>(G), static_cast<Index>(v(i, 0)));
    const MatrixXd xraw = xnet.raw_output(m.params(), zg, br);
    MatrixXd yin(2, G);
    yin.row(0) = zg;
    yin.row(1).setConstant(v(i, 1));
    const MatrixXd yraw = ynet.raw_output(m.params(), yin);
    const RowVectorXd lx = nnet::log_prob_raw(xnet.spec().heads[0], xraw, MatrixXd::Constant(1, G, v(i, 1)));
    const RowVectorXd ly = nnet::log_prob_raw(ynet.spec().heads[0], yraw, MatrixXd::Constant(1, G, v(i, 2)));
    const Eigen::ArrayXd lj = (lx + ly).transpose().array() - 0.5 * zg.row(0).transpose().array().square() -
                              0.5 * std::log(2.0 * M_PI) + std::log(step);
    const double mx = lj.maxCoeff();
    exact += mx + std::log((lj - mx).exp().sum());
  }
  exact /= static_cast<double>(n);
  const auto t = m.elbo(d, 3);
  CHECK(t.total <= exact + 1e-3);
  CHECK(t.total > exact - 10.0);
}

TEST_CASE("one epoch improves the training elbo") {
  const auto d = appendix_data(4000, 5);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 5;
  auto m = CevaeModel::for_dataset(graph::builtin("fig1a"), d, cfg);
  const double before = m.elbo(d, 11).total;
  const auto log = train(m, d);
  REQUIRE(log.size() == 1);
  CHECK(m.elbo(d, 11).total > before);
}

TEST_CASE("training is deterministic per seed") {
  const auto d = fig1c_data(600, 6);
  auto cfg = small_config(6);
  cfg.epochs = 2;
  cfg.batch_size = 128;
  auto m1 = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  auto m2 = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  const auto l1 = train(m1, d), l2 = train(m2, d);
  CHECK(l1.back().total == l2.back().total);
  CHECK(m1.params().values() == m2.params().values());
  int calls = 0;
  auto m3 = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  train(m3, d, [&](Index epoch, const ElboTerms&, const CevaeModel&) { CHECK(epoch == ++calls); });
  CHECK(calls == 2);
}

TEST_CASE("non-finite likelihood names the record and training restores parameters") {
  auto d = fig1c_data(50, 7);
  d.values()(17, d.column_index("X[1]")) = 1e200;
  auto cfg = small_config(7);
  cfg.batch_size = 50;
  auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  try {
    m.elbo_at(d, draws(1, 2, 50, 1), false);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.record() == 17);
  }
  const VectorXd start = m.params().values();
  cfg.epochs = 3;
  auto m2 = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  CHECK_THROWS_AS(train(m2, d), NumericalError);
  CHECK(m2.params().values() == start);
}

TEST_CASE("inference is deterministic with the sd floor") {
  auto d = fig1c_data(20, 8);
  d.values().row(5) = d.values().row(3);
  auto cfg = small_config(8);
  auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  // Drive the raw sd outputs negative so the floor is active.
  auto bias = m.params().param(m.inference_net().output_bias(0));
  bias.bottomRows(m.latent_dim()).setConstant(-20.0);
  const auto p1 = m.infer(d), p2 = m.infer(d);
  CHECK(p1.mean == p2.mean);
  CHECK(p1.sd.minCoeff() >= nnet::kSigmaMin);
  CHECK(p1.mean.row(5) == p1.mean.row(3));
  auto y_changed = d;
  y_changed.values().col(d.column_index("Y")).array() = 1.0 - d.values().col(d.column_index("Y")).array();
  CHECK(m.infer(y_changed).mean == p1.mean);
}

TEST_CASE("reconstruction policies") {
  const auto d = fig1c_data(200, 9);
  auto cfg = small_config(9);
  auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  const VectorXd a = d.values().col(d.column_index("A"));
  for (auto mode : {DecodeMode::Mean, DecodeMode::Sample}) {
    CAPTURE(to_string(mode));
    const auto f = reconstruct(m, d, mode, 3);
    CHECK(counterfactual_reconstruct(m, d, APolicy::per_record(a), mode, 3).values() == f.values());
    const VectorXd twice = APolicy::switched().resolve(APolicy::switched().resolve(a));
    CHECK(counterfactual_reconstruct(m, d, APolicy::per_record(twice), mode, 3).values() == f.values());
    const auto cf = counterfactual_reconstruct(m, d, APolicy::switched(), mode, 3);
    CHECK(cf.values().col(cf.column_index("A")) == (1.0 - a.array()).matrix());
    for (const auto& name : {"B[0]", "B[1]"}) CHECK(cf.values().col(cf.column_index(name)) == d.values().col(d.column_index(name)));
    for (Index k = 0; k < 2; ++k) {
      const auto zc = "Z[" + std::to_string(k) + "]";
      CHECK(cf.values().col(cf.column_index(zc)) == f.values().col(f.column_index(zc)));
      CHECK_FALSE(cf.columns()[static_cast<std::size_t>(cf.column_index(zc))].observed);
    }
    CHECK_FALSE(cf.has_noise());
  }
  const auto s1 = reconstruct(m, d, DecodeMode::Sample, 3), s2 = reconstruct(m, d, DecodeMode::Sample, 4);
  CHECK(s1.values() != s2.values());
  CHECK(reconstruct(m, d, DecodeMode::Mean, 3).values() == reconstruct(m, d, DecodeMode::Mean, 4).values());
}

TEST_CASE("tar heads route on the sensitive value") {
  auto d = fig1c_data(100, 10);
  d.values().col(d.column_index("A")).setZero();
  auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, small_config(10));
  const auto& xnet = m.generative_net("X");
  m.params().param(xnet.output_weight(1)).setZero();
  m.params().param(xnet.output_bias(1)).setConstant(0.37);
  const auto cf = counterfactual_reconstruct(m, d, APolicy::set(1.0), DecodeMode::Mean, 1);
  const auto f = reconstruct(m, d, DecodeMode::Mean, 1);
  for (Index k = 0; k < 3; ++k) {
    const auto name = "X[" + std::to_string(k) + "]";
    CHECK((cf.values().col(cf.column_index(name)).array() == 0.37).all());
    const VectorXd fx = f.values().col(f.column_index(name));
    CHECK(fx.maxCoeff() - fx.minCoeff() > 1e-6);
  }
}

TEST_CASE("nested r star") {
  const auto d = fig1c_data(150, 11);
  auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, small_config(11));
  const VectorXd a = d.values().col(d.column_index("A"));
  const MatrixXd rs = nested_r_star(m, d, a);
  const auto f = reconstruct(m, d, DecodeMode::Mean, 0);
  REQUIRE(rs.cols() == 2);
  CHECK(rs.col(0) == f.values().col(f.column_index("R[0]")));
  CHECK(rs.col(1) == f.values().col(f.column_index("R[1]")));
  const MatrixXd r0 = nested_r_star(m, d, VectorXd::Zero(1));
  CHECK(r0.rows() == d.rows());

  const auto ad = appendix_data(20, 1);
  auto am = CevaeModel::for_dataset(graph::builtin("fig1a"), ad, small_config());
  CHECK_THROWS_AS(nested_r_star(am, ad, VectorXd::Zero(1)), ContractError);
}

TEST_CASE("r star ignores the base value when r does not read x") {
  // R's network reads only z; with its x inputs absent, R* cannot depend on a'.
  auto g = graph::builtin("fig1c");
  graph::CausalGraph h;
  for (const auto& n : g.nodes()) h.add_node(n.name, n.role, n.observed);
  for (const auto& [from, to] : g.edges())
    if (!(from == "X" && to == "R")) h.add_edge(from, to);
  const auto d = fig1c_data(120, 12);
  auto m = CevaeModel::for_dataset(h, d, small_config(12));
  CHECK(nested_r_star(m, d, VectorXd::Zero(1)) == nested_r_star(m, d, VectorXd::Ones(1)));
}

TEST_CASE("checkpoint round trip") {
  const auto d = fig1c_data(60, 13);
  auto cfg = small_config(13);
  cfg.epochs = 1;
  cfg.batch_size = 32;
  auto m = CevaeModel::for_dataset(graph::builtin("fig1c"), d, cfg);
  train(m, d);
  const auto doc = m.checkpoint();
  CHECK(doc.at("kind") == "cevae");
  const auto back = CevaeModel::from_checkpoint(nlohmann::json::parse(doc.dump()));
  CHECK(back.params().values() == m.params().values());
  CHECK(back.infer(d).mean == m.infer(d).mean);
  CHECK(back.elbo(d, 2).total == m.elbo(d, 2).total);
  auto bad = doc;
  bad["kind"] = "mlp";
  CHECK_THROWS_AS(CevaeModel::from_checkpoint(bad), ContractError);
}

TEST_CASE("train config validation and json") {
  TrainConfig c;
  CHECK(c.learning_rate == 1e-4);
  CHECK(c.batch_size == 512);
  CHECK(c.n_mc_samples == 1);
  CHECK(c.latent_dim == 5);
  CHECK(c.hidden_width == 100);
  c.epochs = 7;
  const auto back = train_config_from_json(to_json(c));
  CHECK(back.epochs == 7);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  CHECK_THROWS_AS(decode_mode_from_string("median"), ContractError);
  CHECK(decode_mode_from_string("sample") == DecodeMode::Sample);
}
