#include <doctest.h>

#include "fairtrade/nnet.hpp"

#include <cmath>
#include <numbers>

using namespace fairtrade;
using namespace fairtrade::nnet;

namespace {

MlpSpec small_spec(HeadSpec head, Index in = 3, std::vector<Index> hidden = {4}, Activation act = Activation::ELU) {
  MlpSpec s;
  s.input_dim = in;
  s.hidden_dims = std::move(hidden);
  s.hidden_activation = act;
  s.heads = {head};
  return s;
}

// Negative log-likelihood of `obs` summed over the batch, gradient added to the store.
LossFn nll_loss(const Mlp& net, const MatrixXd& x, const MatrixXd& obs, std::vector<Index> branch = {}) {
  return [&net, x, obs, branch](ParamStore& store) {
    const Tape t = net.forward(store, x, branch);
    MatrixXd d_raw = MatrixXd::Zero(t.raw.rows(), t.raw.cols());
    MatrixXd d_head = MatrixXd::Zero(net.spec().heads[0].raw_width(), x.cols());
    const RowVectorXd w = RowVectorXd::Constant(x.cols(), -1.0);
    const RowVectorXd ll = log_prob_raw(net.spec().heads[0], net.head_raw(t.raw, 0), obs, &d_head, &w);
    d_raw.middleRows(net.head_offset(0), d_head.rows()) = d_head;
    net.backward(store, t, d_raw);
    return -ll.sum();
  };
}

}  // namespace

TEST_CASE("zero-weight network emits neutral head parameters") {
  ParamStore store;
  MlpSpec s = small_spec(HeadSpec::bernoulli(2));
  s.heads.push_back(HeadSpec::gaussian(1));
  Mlp net(s, store, "net.");
  const MatrixXd x = MatrixXd::Random(3, 5);
  const auto heads = net.heads(net.raw_output(store, x));
  CHECK((heads[0].prob.array() == 0.5).all());
  CHECK(heads[1].sd(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK((heads[1].mean.array() == 0.0).all());
}

TEST_CASE("ELU hidden unit with identity weight") {
  ParamStore store;
  Mlp net(small_spec(HeadSpec::gaussian(1), 1, {1}), store, "n.");
  store.param(net.hidden_weight(0))(0, 0) = 1.0;
  store.param(net.output_weight(0)).setZero();
  store.param(net.output_weight(0))(0, 0) = 1.0;  // mean row reads the hidden unit
  const MatrixXd raw = net.raw_output(store, MatrixXd::Constant(1, 1, -1.0));
  CHECK(raw(0, 0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-14));
}

TEST_CASE("forward rejects wrong input width") {
  ParamStore store;
  Mlp net(small_spec(HeadSpec::bernoulli(1)), store, "n.");
  CHECK_THROWS_AS(net.forward(store, MatrixXd::Zero(2, 4)), ContractError);
}

TEST_CASE("log_prob reference values") {
  HeadParams b{HeadKind::Bernoulli, MatrixXd::Constant(1, 1, 0.5), {}, {}};
  CHECK(log_prob(HeadSpec::bernoulli(1), b, MatrixXd::Constant(1, 1, 1.0))(0) == doctest::Approx(std::log(0.5)));

  HeadParams g{HeadKind::Gaussian, {}, MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1)};
  CHECK(log_prob(HeadSpec::gaussian(1), g, MatrixXd::Zero(1, 1))(0) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)));

  MatrixXd probs(2, 1);
  probs << 0.2, 0.8;
  HeadParams c{HeadKind::Categorical, probs, {}, {}};
  CHECK(log_prob(HeadSpec::categorical(2), c, MatrixXd::Constant(1, 1, 1.0))(0) == doctest::Approx(std::log(0.8)));
  CHECK_THROWS_AS(log_prob(HeadSpec::categorical(2), c, MatrixXd::Constant(1, 1, 2.0)), ContractError);
}

TEST_CASE("head distributions are normalized") {
  SUBCASE("bernoulli") {
    const MatrixXd raw = MatrixXd::Constant(1, 1, 0.37);
    const double p0 = std::exp(log_prob_raw(HeadSpec::bernoulli(1), raw, MatrixXd::Zero(1, 1))(0));
    const double p1 = std::exp(log_prob_raw(HeadSpec::bernoulli(1), raw, MatrixXd::Ones(1, 1))(0));
    CHECK(p0 + p1 == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("categorical") {
    const HeadSpec h = HeadSpec::categorical(4);
    MatrixXd raw(4, 1);
    raw << 0.3, -1.2, 2.0, 0.0;
    const auto params = decode_head(h, raw);
    CHECK(std::abs(params.prob.sum() - 1.0) < 1e-9);
    double total = 0.0;
    for (int k = 0; k < 4; ++k) total += std::exp(log_prob_raw(h, raw, MatrixXd::Constant(1, 1, k))(0));
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  SUBCASE("gaussian by trapezoid quadrature over +-8 sd") {
    const HeadSpec h = HeadSpec::gaussian(1);
    MatrixXd raw(2, 1);
    raw << 0.7, -0.4;
    const auto params = decode_head(h, raw);
    const double mu = params.mean(0, 0), sd = params.sd(0, 0);
    const int steps = 4000;
    const double lo = mu - 8 * sd, hi = mu + 8 * sd, dx = (hi - lo) / steps;
    double area = 0.0;
    for (int i = 0; i <= steps; ++i) {
      const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
      area += w * std::exp(log_prob(h, params, MatrixXd::Constant(1, 1, lo + i * dx))(0)) * dx;
    }
    CHECK(std::abs(area - 1.0) < 1e-3);
  }
}

TEST_CASE("gaussian sd is clamped at the floor") {
  MatrixXd raw(2, 1);
  raw << 0.0, -20.0;
  const auto params = decode_head(HeadSpec::gaussian(1), raw);
  CHECK(params.sd(0, 0) == kSigmaMin);
}

TEST_CASE("backward before forward is a state error") {
  ParamStore store;
  Mlp net(small_spec(HeadSpec::bernoulli(1)), store, "n.");
  Tape t;
  CHECK_THROWS_AS(net.backward(store, t, MatrixXd::Zero(1, 1)), StateError);
}

TEST_CASE("analytic derivative of w^2") {
  ParamStore store;
  const Index id = store.add("w", 1, 1);
  store.param(id)(0, 0) = 3.0;
  LossFn f = [id](ParamStore& s) {
    const double w = s.param(id)(0, 0);
    s.grad(id)(0, 0) += 2.0 * w;
    return w * w;
  };
  f(store);
  CHECK(store.grads()(0) == doctest::Approx(6.0));
  CHECK(grad_check(store, f) < 1e-9);
}

TEST_CASE("zero input gives zero weight gradient for a logistic unit") {
  ParamStore store;
  Mlp net(small_spec(HeadSpec::bernoulli(1), 1, {}), store, "lr.");
  store.param(net.output_weight(0))(0, 0) = 0.8;
  nll_loss(net, MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1))(store);
  CHECK(store.grad(net.output_weight(0))(0, 0) == 0.0);
  CHECK(store.grad(net.output_bias(0))(0, 0) != 0.0);
}

TEST_CASE("constant loss has zero gradient error") {
  ParamStore store;
  store.add("w", 2, 2);
  CHECK(grad_check(store, [](ParamStore&) { return 4.0; }) == 0.0);
}

TEST_CASE("linear model squared loss passes finite differences tightly") {
  ParamStore store;
  MlpSpec s = small_spec(HeadSpec::gaussian(1), 2, {});
  Mlp net(s, store, "lin.");
  Rng rng(5);
  net.init_glorot(store, rng);
  const MatrixXd x = standard_normal(rng, 2, 6);
  const MatrixXd y = standard_normal(rng, 1, 6);
  LossFn sq = [&](ParamStore& st) {
    const Tape t = net.forward(st, x);
    const RowVectorXd r = t.raw.row(0) - y.row(0);
    MatrixXd d = MatrixXd::Zero(t.raw.rows(), t.raw.cols());
    d.row(0) = 2.0 * r;
    net.backward(st, t, d);
    return r.squaredNorm();
  };
  CHECK(grad_check(store, sq) <= 1e-7);
}

TEST_CASE("gradient check across head kinds, activations and seeds") {
  const std::vector<HeadSpec> heads = {HeadSpec::bernoulli(2), HeadSpec::gaussian(3), HeadSpec::categorical(3, 2)};
  for (const auto act : {Activation::ELU, Activation::ReLU}) {
    for (const auto& head : heads) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        ParamStore store;
        Mlp net(small_spec(head, 3, {5}, act), store, "n.");
        Rng rng(seed);
        net.init_glorot(store, rng);
        store.values() += 0.1 * standard_normal(rng, store.size(), 1);
        const MatrixXd x = standard_normal(rng, 3, 7);
        MatrixXd obs(head.dim, 7);
        for (Index j = 0; j < 7; ++j)
          for (Index i = 0; i < head.dim; ++i) {
            const double u = standard_uniform(rng, 1, 1)(0, 0);
            obs(i, j) = head.kind == HeadKind::Gaussian ? 2.0 * u - 1.0
                        : head.kind == HeadKind::Bernoulli ? (u < 0.5 ? 0.0 : 1.0)
                                                            : std::floor(u * static_cast<double>(head.categories));
          }
        CAPTURE(to_string(head.kind));
        CHECK(grad_check(store, nll_loss(net, x, obs)) <= 1e-4);
      }
    }
  }
}

TEST_CASE("gradient check for a two-branch network with 100 hidden ELU units") {
  ParamStore store;
  MlpSpec s = small_spec(HeadSpec::bernoulli(1), 4, {100});
  s.branches = 2;
  Mlp net(s, store, "tar.");
  Rng rng(11);
  net.init_glorot(store, rng);
  const MatrixXd x = standard_normal(rng, 4, 6);
  const MatrixXd obs = (standard_uniform(rng, 1, 6).array() < 0.5).cast<double>().matrix();
  CHECK(grad_check(store, nll_loss(net, x, obs, {0, 1, 1, 0, 1, 0})) <= 1e-4);
}

TEST_CASE("reparameterized gaussian sampling") {
  VectorXd mu(2), sd(2), eps(2);
  mu << 0.0, 1.5;
  sd << 0.1, 0.3;
  eps << 1.0, 0.0;
  const MatrixXd z = sample_gaussian_reparam(mu, sd, eps);
  CHECK(z(0) == doctest::Approx(0.1));
  CHECK(z(1) == 1.5);

  SUBCASE("finite-difference derivatives are 1 and eps") {
    const double h = 1e-6;
    const double e = 0.73;
    auto f = [&](double m, double s) { return sample_gaussian_reparam(VectorXd::Constant(1, m), VectorXd::Constant(1, s), VectorXd::Constant(1, e))(0); };
    CHECK((f(0.2 + h, 0.5) - f(0.2 - h, 0.5)) / (2 * h) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK((f(0.2, 0.5 + h) - f(0.2, 0.5 - h)) / (2 * h) == doctest::Approx(e).epsilon(1e-8));
  }
  SUBCASE("empirical mean of 1e5 draws") {
    Rng rng(3);
    const Index n = 100000;
    const MatrixXd draws = sample_gaussian_reparam(MatrixXd::Constant(1, n, 0.4), MatrixXd::Constant(1, n, 2.0),
                                                   standard_normal(rng, 1, n));
    CHECK(std::abs(draws.mean() - 0.4) < 3.0 * 2.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("optimizer updates") {
  SUBCASE("adam first step moves by lr against the gradient sign") {
    ParamStore store;
    store.add("w", 3, 1);
    store.grads() << 2.0, -0.5, 0.0;
    auto opt = OptState::adam(store.size(), 0.01);
    optimizer_step(opt, store);
    CHECK(store.values()(0) == doctest::Approx(-0.01 * 2.0 / (2.0 + 1e-8)));
    CHECK(store.values()(1) == doctest::Approx(0.01));
    CHECK(store.values()(2) == 0.0);
    CHECK(opt.step_count == 1);
    CHECK(store.grads().isZero());
  }
  SUBCASE("rmsprop first step") {
    ParamStore store;
    store.add("w", 1, 1);
    store.grads()(0) = 0.3;
    auto opt = OptState::rmsprop(1, 1e-3);
    optimizer_step(opt, store);
    const double v = 0.01 * 0.09;
    CHECK(store.values()(0) == doctest::Approx(-1e-3 * 0.3 / (std::sqrt(v) + 1e-8)));
  }
  SUBCASE("zero gradient leaves parameters but decays moments") {
    ParamStore store;
    store.add("w", 1, 1);
    store.values()(0) = 1.25;
    auto opt = OptState::adam(1, 0.1);
    opt.m(0) = 0.5;
    opt.v(0) = 0.2;
    opt.step_count = 10;
    store.grads()(0) = 0.0;
    optimizer_step(opt, store);
    CHECK(opt.m(0) == doctest::Approx(0.45));
    CHECK(opt.v(0) == doctest::Approx(0.2 * 0.999));
    CHECK(opt.step_count == 11);
  }
  SUBCASE("non-finite gradient aborts without an update") {
    ParamStore store;
    store.add("w", 2, 1);
    store.values() << 1.0, 2.0;
    store.grads() << 0.1, std::nan("");
    auto opt = OptState::adam(2, 0.1);
    CHECK_THROWS_AS(optimizer_step(opt, store), NumericalError);
    CHECK(store.values()(0) == 1.0);
    CHECK(opt.step_count == 0);
  }
  SUBCASE("quadratic bowl decreases monotonically after warm-up") {
    ParamStore store;
    const Index id = store.add("w", 4, 1);
    store.values() << 3.0, -2.0, 1.0, 0.5;
    VectorXd scale(4);
    scale << 1.0, 2.0, 0.5, 4.0;
    auto loss = [&]() { return (scale.array() * store.values().array().square()).sum(); };
    auto opt = OptState::adam(4, 0.01);
    double prev = loss();
    bool monotone = true;
    for (int step = 0; step < 500; ++step) {
      store.grad(id) = (2.0 * scale.array() * store.values().array()).matrix();
      optimizer_step(opt, store);
      const double now = loss();
      if (step >= 10 && now > prev) monotone = false;
      prev = now;
    }
    CHECK(monotone);
    CHECK(prev < 1.0);
  }
  SUBCASE("updates are deterministic") {
    auto run = [] {
      ParamStore store;
      store.add("w", 2, 1);
      auto opt = OptState::rmsprop(2, 0.05);
      for (int i = 0; i < 20; ++i) {
        store.grads() = store.values() + VectorXd::Constant(2, 0.3);
        optimizer_step(opt, store);
      }
      return store.values();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("checkpoint round trip") {
  ParamStore store;
  MlpSpec s = small_spec(HeadSpec::gaussian(2), 3, {4, 2});
  s.branches = 2;
  Mlp net(s, store, "g.");
  Rng rng(9);
  net.init_glorot(store, rng);
  const auto doc = checkpoint_json(to_json(s), store);
  CHECK(doc.at("version") == 1);
  const auto spec_back = mlp_spec_from_json(doc.at("spec"));
  CHECK(spec_back == s);
  ParamStore other;
  Mlp again(spec_back, other, "g.");
  load_checkpoint(doc, other);
  CHECK(other.values() == store.values());
  CHECK(checkpoint_json(to_json(s), other).dump() == doc.dump());

  std::vector<std::string> names;
  for (const auto& e : doc.at("layout")) names.push_back(e.at("name"));
  CHECK(std::is_sorted(names.begin(), names.end()));
}

TEST_CASE("param store layout is disjoint and covering") {
  ParamStore store;
  Mlp net(small_spec(HeadSpec::categorical(3), 2, {3, 3}), store, "c.");
  Index next = 0;
  for (const auto& b : store.layout()) {
    CHECK(b.offset == next);
    next += b.size();
  }
  CHECK(next == store.size());
  CHECK(store.grads().size() == store.size());
  CHECK_THROWS_AS(store.add(store.layout().front().name, 1, 1), ContractError);
}
