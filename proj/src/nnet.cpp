#include "fairtrade/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fairtrade::nnet {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::ELU ? "elu" : "relu"; }

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::Bernoulli: return "bernoulli";
    case HeadKind::Gaussian: return "gaussian";
    case HeadKind::Categorical: return "categorical";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "elu") return Activation::ELU;
  if (s == "relu") return Activation::ReLU;
  throw ContractError("unknown activation '" + s + "'");
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "bernoulli") return HeadKind::Bernoulli;
  if (s == "gaussian") return HeadKind::Gaussian;
  if (s == "categorical") return HeadKind::Categorical;
  throw ContractError("unknown head kind '" + s + "'");
}

Index HeadSpec::raw_width() const {
  switch (kind) {
    case HeadKind::Bernoulli: return dim;
    case HeadKind::Gaussian: return 2 * dim;
    case HeadKind::Categorical: return dim * categories;
  }
  return 0;
}

void HeadSpec::validate() const {
  require(dim >= 1, "head dim must be >= 1");
  if (kind == HeadKind::Categorical) require(categories >= 2, "categorical head needs k >= 2");
}

Index MlpSpec::output_width() const {
  Index w = 0;
  for (const auto& h : heads) w += h.raw_width();
  return w;
}

void MlpSpec::validate() const {
  require(input_dim >= 1, "input_dim must be >= 1");
  for (Index d : hidden_dims) require(d >= 1, "hidden dims must be >= 1");
  require(!heads.empty(), "network needs at least one output head");
  for (const auto& h : heads) h.validate();
  require(branches >= 1, "branches must be >= 1");
}

// ---------------------------------------------------------------- ParamStore

Index ParamStore::add(const std::string& name, Index rows, Index cols) {
  require(find(name) < 0, "duplicate parameter block '" + name + "'");
  Block b{name, values_.size(), rows, cols};
  layout_.push_back(b);
  const Index n = values_.size() + b.size();
  values_.conservativeResize(n);
  grads_.conservativeResize(n);
  values_.tail(b.size()).setZero();
  grads_.tail(b.size()).setZero();
  return static_cast<Index>(layout_.size()) - 1;
}

Index ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < layout_.size(); ++i)
    if (layout_[i].name == name) return static_cast<Index>(i);
  return -1;
}

Eigen::Map<MatrixXd> ParamStore::param(Index id) {
  const auto& b = block(id);
  return {values_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const MatrixXd> ParamStore::param(Index id) const {
  const auto& b = block(id);
  return {values_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<MatrixXd> ParamStore::grad(Index id) {
  const auto& b = block(id);
  return {grads_.data() + b.offset, b.rows, b.cols};
}

// ---------------------------------------------------------------- heads

HeadParams decode_head(const HeadSpec& head, const Eigen::Ref<const MatrixXd>& raw) {
  require(raw.rows() == head.raw_width(), "raw block width does not match head");
  HeadParams p;
  p.kind = head.kind;
  switch (head.kind) {
    case HeadKind::Bernoulli:
      p.prob = sigmoid(raw.array()).matrix();
      break;
    case HeadKind::Gaussian:
      p.mean = raw.topRows(head.dim);
      p.sd = softplus(raw.bottomRows(head.dim).array()).max(kSigmaMin).matrix();
      break;
    case HeadKind::Categorical: {
      const Index k = head.categories;
      p.prob.resize(raw.rows(), raw.cols());
      for (Index v = 0; v < head.dim; ++v) {
        auto logits = raw.middleRows(v * k, k);
        MatrixXd e = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
        p.prob.middleRows(v * k, k) = e.array().rowwise() / e.colwise().sum().array();
      }
      break;
    }
  }
  return p;
}

namespace {

Index category_code(double obs, Index k) {
  const double r = std::round(obs);
  if (!(std::abs(obs - r) < 1e-9) || r < 0 || r >= static_cast<double>(k))
    throw ContractError("categorical observation " + std::to_string(obs) + " outside {0.." +
                        std::to_string(k - 1) + "}");
  return static_cast<Index>(r);
}

}  // namespace

RowVectorXd log_prob(const HeadSpec& head, const HeadParams& params, const Eigen::Ref<const MatrixXd>& obs) {
  require(obs.rows() == head.dim, "observation dim does not match head");
  const Index n = obs.cols();
  switch (head.kind) {
    case HeadKind::Bernoulli: {
      const auto p = params.prob.array();
      const auto y = obs.array();
      const Eigen::ArrayXXd on = (y == 0.0).select(0.0, y * p.log());
      const Eigen::ArrayXXd off = (y == 1.0).select(0.0, (1.0 - y) * (1.0 - p).log());
      return (on + off).colwise().sum();
    }
    case HeadKind::Gaussian: {
      const auto z = (obs.array() - params.mean.array()) / params.sd.array();
      return (-kHalfLog2Pi - params.sd.array().log() - 0.5 * z.square()).colwise().sum();
    }
    case HeadKind::Categorical: {
      RowVectorXd out = RowVectorXd::Zero(n);
      const Index k = head.categories;
      for (Index i = 0; i < n; ++i)
        for (Index v = 0; v < head.dim; ++v)
          out(i) += std::log(params.prob(v * k + category_code(obs(v, i), k), i));
      return out;
    }
  }
  return RowVectorXd::Zero(n);
}

RowVectorXd log_prob_raw(const HeadSpec& head, const Eigen::Ref<const MatrixXd>& raw,
                         const Eigen::Ref<const MatrixXd>& obs, MatrixXd* d_raw, const RowVectorXd* weights) {
  require(raw.rows() == head.raw_width(), "raw block width does not match head");
  require(obs.rows() == head.dim && obs.cols() == raw.cols(), "observation shape does not match head");
  const Index n = obs.cols();
  RowVectorXd w = weights ? *weights : RowVectorXd::Ones(n);
  if (d_raw) require(d_raw->rows() == raw.rows() && d_raw->cols() == n, "d_raw shape mismatch");

  switch (head.kind) {
    case HeadKind::Bernoulli: {
      const auto l = raw.array();
      const auto y = obs.array();
      if (d_raw) d_raw->array() += (y - sigmoid(l)).rowwise() * w.array();
      return (y * l - softplus(l)).colwise().sum();
    }
    case HeadKind::Gaussian: {
      const Index d = head.dim;
      const auto m = raw.topRows(d).array();
      const auto r = raw.bottomRows(d).array();
      const Eigen::ArrayXXd s = softplus(r);
      const Eigen::ArrayXXd sd = s.max(kSigmaMin);
      const Eigen::ArrayXXd diff = obs.array() - m;
      if (d_raw) {
        const Eigen::ArrayXXd dm = diff / sd.square();
        const Eigen::ArrayXXd dsd = -1.0 / sd + diff.square() / sd.cube();
        const Eigen::ArrayXXd dr = (s > kSigmaMin).select(dsd * sigmoid(r), 0.0);
        d_raw->topRows(d).array() += dm.rowwise() * w.array();
        d_raw->bottomRows(d).array() += dr.rowwise() * w.array();
      }
      return (-kHalfLog2Pi - sd.log() - 0.5 * (diff / sd).square()).colwise().sum();
    }
    case HeadKind::Categorical: {
      const Index k = head.categories;
      RowVectorXd out = RowVectorXd::Zero(n);
      for (Index v = 0; v < head.dim; ++v) {
        auto logits = raw.middleRows(v * k, k);
        for (Index i = 0; i < n; ++i) {
          const Index c = category_code(obs(v, i), k);
          const double mx = logits.col(i).maxCoeff();
          const VectorXd e = (logits.col(i).array() - mx).exp().matrix();
          const double lse = mx + std::log(e.sum());
          out(i) += logits(c, i) - lse;
          if (d_raw) {
            VectorXd g = -e / e.sum();
            g(c) += 1.0;
            d_raw->block(v * k, i, k, 1) += w(i) * g;
          }
        }
      }
      return out;
    }
  }
  return RowVectorXd::Zero(n);
}

MatrixXd head_mean(const HeadSpec& head, const HeadParams& params) {
  switch (head.kind) {
    case HeadKind::Bernoulli: return params.prob;
    case HeadKind::Gaussian: return params.mean;
    case HeadKind::Categorical: {
      const Index k = head.categories;
      const Index n = params.prob.cols();
      MatrixXd out(head.dim, n);
      for (Index v = 0; v < head.dim; ++v)
        for (Index i = 0; i < n; ++i) {
          Index arg = 0;
          params.prob.col(i).segment(v * k, k).maxCoeff(&arg);
          out(v, i) = static_cast<double>(arg);
        }
      return out;
    }
  }
  return {};
}

MatrixXd head_sample(const HeadSpec& head, const HeadParams& params, Rng& rng) {
  switch (head.kind) {
    case HeadKind::Bernoulli: {
      const Index n = params.prob.cols();
      const MatrixXd u = standard_uniform(rng, head.dim, n);
      return (u.array() < params.prob.array()).cast<double>().matrix();
    }
    case HeadKind::Gaussian: {
      const MatrixXd eps = standard_normal(rng, head.dim, params.mean.cols());
      return sample_gaussian_reparam(params.mean, params.sd, eps);
    }
    case HeadKind::Categorical: {
      const Index k = head.categories;
      const Index n = params.prob.cols();
      const MatrixXd u = standard_uniform(rng, head.dim, n);
      MatrixXd out(head.dim, n);
      for (Index v = 0; v < head.dim; ++v)
        for (Index i = 0; i < n; ++i) {
          double acc = 0.0;
          Index c = k - 1;
          for (Index j = 0; j < k; ++j) {
            acc += params.prob(v * k + j, i);
            if (u(v, i) < acc) {
              c = j;
              break;
            }
          }
          out(v, i) = static_cast<double>(c);
        }
      return out;
    }
  }
  return {};
}

// ---------------------------------------------------------------- Mlp

Mlp::Mlp(MlpSpec spec, ParamStore& store, const std::string& prefix) : spec_(std::move(spec)), prefix_(prefix) {
  spec_.validate();
  Index in = spec_.input_dim;
  for (std::size_t l = 0; l < spec_.hidden_dims.size(); ++l) {
    const Index out = spec_.hidden_dims[l];
    hidden_w_.push_back(store.add(prefix_ + "hidden" + std::to_string(l) + ".W", out, in));
    hidden_b_.push_back(store.add(prefix_ + "hidden" + std::to_string(l) + ".b", out, 1));
    in = out;
  }
  for (Index b = 0; b < spec_.branches; ++b) {
    out_w_.push_back(store.add(prefix_ + "out" + std::to_string(b) + ".W", spec_.output_width(), in));
    out_b_.push_back(store.add(prefix_ + "out" + std::to_string(b) + ".b", spec_.output_width(), 1));
  }
  Index off = 0;
  for (const auto& h : spec_.heads) {
    head_offsets_.push_back(off);
    off += h.raw_width();
  }
}

void Mlp::init_glorot(ParamStore& store, Rng& rng) const {
  auto fill = [&](Index id) {
    auto w = store.param(id);
    const double lim = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-lim, lim);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  };
  for (Index id : hidden_w_) fill(id);
  for (Index id : out_w_) fill(id);
  for (Index id : hidden_b_) store.param(id).setZero();
  for (Index id : out_b_) store.param(id).setZero();
}

void Mlp::check_input(const Eigen::Ref<const MatrixXd>& input, std::span<const Index> branch) const {
  if (input.rows() != spec_.input_dim)
    throw ContractError("input has " + std::to_string(input.rows()) + " features, network expects " +
                        std::to_string(spec_.input_dim));
  if (!branch.empty()) {
    require(static_cast<Index>(branch.size()) == input.cols(), "one branch index per sample required");
    for (Index b : branch) require(b >= 0 && b < spec_.branches, "branch index out of range");
  }
}

namespace {

MatrixXd activate(Activation a, const MatrixXd& pre) {
  if (a == Activation::ELU) return elu(pre.array()).matrix();
  return relu(pre.array()).matrix();
}

MatrixXd activation_grad(Activation a, const MatrixXd& pre) {
  if (a == Activation::ELU) return (pre.array() > 0.0).select(1.0, pre.array().exp()).matrix();
  return (pre.array() > 0.0).cast<double>().matrix();
}

}  // namespace

Tape Mlp::forward(const ParamStore& store, const Eigen::Ref<const MatrixXd>& input,
                  std::span<const Index> branch) const {
  check_input(input, branch);
  Tape t;
  MatrixXd h = input;
  for (std::size_t l = 0; l < hidden_w_.size(); ++l) {
    MatrixXd pre = store.param(hidden_w_[l]) * h;
    pre.colwise() += store.param(hidden_b_[l]).col(0);
    t.layer_inputs.push_back(std::move(h));
    h = activate(spec_.hidden_activation, pre);
    t.pre.push_back(std::move(pre));
  }
  if (spec_.branches == 1 || branch.empty()) {
    t.raw = store.param(out_w_[0]) * h;
    t.raw.colwise() += store.param(out_b_[0]).col(0);
  } else {
    t.raw.resize(spec_.output_width(), h.cols());
    for (Index b = 0; b < spec_.branches; ++b) {
      MatrixXd o = store.param(out_w_[b]) * h;
      o.colwise() += store.param(out_b_[b]).col(0);
      for (Index i = 0; i < h.cols(); ++i)
        if (branch[i] == b) t.raw.col(i) = o.col(i);
    }
  }
  t.layer_inputs.push_back(std::move(h));
  t.branch.assign(branch.begin(), branch.end());
  t.valid = true;
  return t;
}

MatrixXd Mlp::raw_output(const ParamStore& store, const Eigen::Ref<const MatrixXd>& input,
                         std::span<const Index> branch) const {
  return forward(store, input, branch).raw;
}

MatrixXd Mlp::backward(ParamStore& store, const Tape& tape, const Eigen::Ref<const MatrixXd>& d_raw) const {
  if (!tape.valid) throw StateError("backward called without a recorded forward pass");
  const MatrixXd& h = tape.layer_inputs.back();
  require(d_raw.rows() == spec_.output_width() && d_raw.cols() == h.cols(), "d_raw shape mismatch");

  MatrixXd dh;
  if (spec_.branches == 1 || tape.branch.empty()) {
    store.grad(out_w_[0]).noalias() += d_raw * h.transpose();
    store.grad(out_b_[0]) += d_raw.rowwise().sum();
    dh = store.param(out_w_[0]).transpose() * d_raw;
  } else {
    dh = MatrixXd::Zero(h.rows(), h.cols());
    for (Index b = 0; b < spec_.branches; ++b) {
      MatrixXd masked = d_raw;
      for (Index i = 0; i < h.cols(); ++i)
        if (tape.branch[i] != b) masked.col(i).setZero();
      store.grad(out_w_[b]).noalias() += masked * h.transpose();
      store.grad(out_b_[b]) += masked.rowwise().sum();
      dh.noalias() += store.param(out_w_[b]).transpose() * masked;
    }
  }
  for (std::size_t l = hidden_w_.size(); l-- > 0;) {
    const MatrixXd dpre = (dh.array() * activation_grad(spec_.hidden_activation, tape.pre[l]).array()).matrix();
    store.grad(hidden_w_[l]).noalias() += dpre * tape.layer_inputs[l].transpose();
    store.grad(hidden_b_[l]) += dpre.rowwise().sum();
    dh = store.param(hidden_w_[l]).transpose() * dpre;
  }
  return dh;
}

std::vector<HeadParams> Mlp::heads(const MatrixXd& raw) const {
  std::vector<HeadParams> out;
  for (std::size_t i = 0; i < spec_.heads.size(); ++i) out.push_back(decode_head(spec_.heads[i], head_raw(raw, i)));
  return out;
}

Eigen::Block<const MatrixXd> Mlp::head_raw(const MatrixXd& raw, std::size_t head) const {
  return raw.middleRows(head_offsets_.at(head), spec_.heads.at(head).raw_width());
}

// ---------------------------------------------------------------- optimizers

OptState OptState::adam(Index size, double lr) {
  OptState s;
  s.algorithm = Algorithm::Adam;
  s.learning_rate = lr;
  s.m = VectorXd::Zero(size);
  s.v = VectorXd::Zero(size);
  return s;
}

OptState OptState::rmsprop(Index size, double lr) {
  OptState s;
  s.algorithm = Algorithm::RMSprop;
  s.learning_rate = lr;
  s.m = VectorXd::Zero(size);
  s.v = VectorXd::Zero(size);
  return s;
}

void optimizer_step(OptState& opt, ParamStore& store) {
  const VectorXd& g = store.grads();
  require(opt.v.size() == g.size() && opt.m.size() == g.size(), "optimizer state does not match parameter layout");
  if (!g.allFinite()) {
    Index bad = 0;
    for (; bad < g.size(); ++bad)
      if (!std::isfinite(g(bad))) break;
    throw NumericalError("non-finite gradient at parameter " + std::to_string(bad) + "; update skipped");
  }
  VectorXd& p = store.values();
  if (opt.algorithm == Algorithm::Adam) {
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * g;
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * g.cwiseAbs2();
    const double t = static_cast<double>(opt.step_count + 1);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    p.array() -= opt.learning_rate * (opt.m.array() / c1) / ((opt.v.array() / c2).sqrt() + opt.epsilon);
  } else {
    opt.v = opt.rho * opt.v + (1.0 - opt.rho) * g.cwiseAbs2();
    p.array() -= opt.learning_rate * g.array() / (opt.v.array().sqrt() + opt.epsilon);
  }
  ++opt.step_count;
  store.zero_grad();
}

// ---------------------------------------------------------------- verification

double grad_check(ParamStore& store, const LossFn& loss, double h) {
  store.zero_grad();
  loss(store);
  const VectorXd analytic = store.grads();
  VectorXd& p = store.values();
  double worst = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double keep = p(i);
    p(i) = keep + h;
    const double up = loss(store);
    p(i) = keep - h;
    const double down = loss(store);
    p(i) = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic(i) - numeric) / std::max(1e-8, std::abs(analytic(i)) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  store.zero_grad();
  return worst;
}

// ---------------------------------------------------------------- checkpoints

nlohmann::json to_json(const MlpSpec& spec) {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : spec.heads)
    heads.push_back({{"kind", to_string(h.kind)}, {"dim", h.dim}, {"categories", h.categories}});
  return {{"input_dim", spec.input_dim},
          {"hidden_dims", spec.hidden_dims},
          {"hidden_activation", to_string(spec.hidden_activation)},
          {"heads", heads},
          {"branches", spec.branches}};
}

MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<Index>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<Index>>();
  s.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  for (const auto& h : j.at("heads"))
    s.heads.push_back({head_kind_from_string(h.at("kind")), h.at("dim").get<Index>(), h.at("categories").get<Index>()});
  s.branches = j.at("branches").get<Index>();
  s.validate();
  return s;
}

nlohmann::json checkpoint_json(const nlohmann::json& spec, const ParamStore& store) {
  std::vector<const ParamStore::Block*> order;
  for (const auto& b : store.layout()) order.push_back(&b);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });
  nlohmann::json layout = nlohmann::json::array();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(store.size()));
  for (const auto* b : order) {
    layout.push_back({{"name", b->name}, {"rows", b->rows}, {"cols", b->cols}});
    for (Index i = 0; i < b->size(); ++i) values.push_back(store.values()(b->offset + i));
  }
  return {{"version", 1}, {"spec", spec}, {"layout", layout}, {"values", values}};
}

void load_checkpoint(const nlohmann::json& doc, ParamStore& store) {
  require(doc.at("version").get<int>() == 1, "unsupported checkpoint version");
  const auto& values = doc.at("values");
  require(static_cast<Index>(values.size()) == store.size(), "checkpoint size does not match parameter layout");
  std::size_t pos = 0;
  for (const auto& entry : doc.at("layout")) {
    const Index id = store.find(entry.at("name").get<std::string>());
    require(id >= 0, "checkpoint block '" + entry.at("name").get<std::string>() + "' not in model");
    const auto& b = store.block(id);
    require(b.rows == entry.at("rows").get<Index>() && b.cols == entry.at("cols").get<Index>(),
            "checkpoint block '" + b.name + "' has a different shape");
    for (Index i = 0; i < b.size(); ++i) store.values()(b.offset + i) = values.at(pos++).get<double>();
  }
  require(pos == values.size(), "checkpoint layout does not cover values");
  store.zero_grad();
}

}  // namespace fairtrade::nnet
