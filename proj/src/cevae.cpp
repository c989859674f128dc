#include "fairtrade/cevae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace fairtrade::cevae {

using graph::Role;
using nnet::HeadKind;
using nnet::HeadSpec;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

HeadKind head_kind(ColumnKind k) {
  switch (k) {
    case ColumnKind::Bernoulli: return HeadKind::Bernoulli;
    case ColumnKind::Gaussian: return HeadKind::Gaussian;
    case ColumnKind::Categorical: return HeadKind::Categorical;
  }
  return HeadKind::Gaussian;
}

std::vector<Index> binary_branches(const VectorXd& a) {
  std::vector<Index> out(static_cast<std::size_t>(a.size()));
  for (Index i = 0; i < a.size(); ++i) {
    if (a(i) != 0.0 && a(i) != 1.0) throw ContractError("sensitive values must be 0 or 1");
    out[static_cast<std::size_t>(i)] = static_cast<Index>(a(i));
  }
  return out;
}

ElboTerms& operator+=(ElboTerms& a, const ElboTerms& b) {
  a.reg += b.reg;
  a.rec_x += b.rec_x;
  a.rec_r += b.rec_r;
  a.rec_y += b.rec_y;
  a.rec_other += b.rec_other;
  a.total += b.total;
  return a;
}

ElboTerms scaled(ElboTerms t, double s) {
  t.reg *= s;
  t.rec_x *= s;
  t.rec_r *= s;
  t.rec_y *= s;
  t.rec_other *= s;
  t.total *= s;
  return t;
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(n_mc_samples >= 1, "n_mc_samples must be >= 1");
  require(epochs >= 0, "epochs must be >= 0");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(hidden_width >= 1, "hidden_width must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"n_mc_samples", c.n_mc_samples},
          {"epochs", c.epochs},               {"seed", c.seed},             {"latent_dim", c.latent_dim},
          {"hidden_width", c.hidden_width}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.n_mc_samples = j.value("n_mc_samples", c.n_mc_samples);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.validate();
  return c;
}

std::string to_string(DecodeMode m) { return m == DecodeMode::Mean ? "mean" : "sample"; }

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "mean") return DecodeMode::Mean;
  if (s == "sample") return DecodeMode::Sample;
  throw ContractError("unknown decode mode '" + s + "' (mean, sample)");
}

VectorXd APolicy::resolve(const VectorXd& observed_a) const {
  switch (kind) {
    case Kind::Observed: return observed_a;
    case Kind::Switch: return (1.0 - observed_a.array()).matrix();
    case Kind::Set: return VectorXd::Constant(observed_a.size(), value);
    case Kind::PerRecord:
      require(values.size() == observed_a.size(), "per-record sensitive values must match the record count");
      return values;
  }
  return observed_a;
}

// ------------------------------------------------------------------ model

struct CevaeModel::Prepared {
  Index n = 0;
  MatrixXd inf_in;                        // features x n
  VectorXd a;
  std::vector<Index> branch;
  std::map<std::string, MatrixXd> enc;    // observed nodes, features x n
  std::vector<std::vector<MatrixXd>> obs; // per generative net, per head: dim x n
};

CevaeModel::CevaeModel(graph::CausalGraph g, DataProfile profile, TrainConfig cfg)
    : graph_(std::move(g)), config_(cfg) {
  config_.validate();
  const auto order = graph::topological_order(graph_);
  sensitive_ = graph_.sensitive();
  graph_.outcome();
  const auto latents = graph_.nodes_with_role(Role::Latent);
  require(latents.size() == 1, "the model needs exactly one latent node");
  latent_ = latents.front();

  for (const auto& c : profile)
    if (graph_.has_node(c.node) && c.observed && graph_.node(c.node).observed && c.node != latent_)
      profile_.push_back(c);
  for (const auto& node : order) {
    if (node == latent_ || !graph_.node(node).observed) continue;
    require(!node_profile_columns(node).empty(), "data has no columns for node '" + node + "'");
  }
  const auto a_cols = node_profile_columns(sensitive_);
  require(a_cols.size() == 1, "the sensitive node must be a single column");

  for (const auto& node : order) {
    const Role r = graph_.node(node).role;
    if (node == latent_ || !graph_.node(node).observed) continue;
    if (r != Role::Outcome) inference_nodes_.push_back(node);
  }
  Index inf_width = 0;
  for (const auto& node : inference_nodes_) inf_width += encoded_width(node);

  const Index D = config_.latent_dim;
  nnet::MlpSpec inf;
  inf.input_dim = inf_width;
  inf.hidden_dims = {config_.hidden_width};
  inf.hidden_activation = nnet::Activation::ELU;
  inf.heads = {HeadSpec::gaussian(D)};
  inference_ = nnet::Mlp(inf, store_, "q.");

  for (const auto& node : order) {
    const auto& gn = graph_.node(node);
    if (!gn.observed || gn.role == Role::Sensitive || gn.role == Role::Base || gn.role == Role::Latent) continue;
    NodeNet nn;
    nn.node = node;
    nn.role = gn.role;
    for (const auto& p : graph_.parents(node)) {
      if (p == sensitive_) {
        nn.tar = true;
        continue;
      }
      require(p == latent_ || graph_.node(p).observed, "parent '" + p + "' of '" + node + "' is unobserved");
      nn.inputs.push_back(p);
    }
    std::stable_partition(nn.inputs.begin(), nn.inputs.end(), [&](const std::string& p) { return p == latent_; });
    require(!nn.inputs.empty(), "node '" + node + "' has no parents besides the sensitive node");

    // Consecutive columns of one distribution kind share a head; categoricals get their own.
    const auto cols = node_profile_columns(node);
    for (Index c : cols) {
      const auto& col = profile_[static_cast<std::size_t>(c)];
      const HeadKind k = head_kind(col.kind);
      if (k != HeadKind::Categorical && !nn.heads.empty() && nn.heads.back().kind == k) {
        ++nn.heads.back().dim;
        nn.head_columns.back().push_back(c);
      } else {
        nn.heads.push_back(k == HeadKind::Categorical ? HeadSpec::categorical(col.categories) : HeadSpec{k, 1, 0});
        nn.head_columns.push_back({c});
      }
    }
    Index width = 0;
    for (const auto& p : nn.inputs) width += p == latent_ ? D : encoded_width(p);
    nnet::MlpSpec spec;
    spec.input_dim = width;
    spec.hidden_dims = {config_.hidden_width};
    spec.hidden_activation = nnet::Activation::ELU;
    spec.heads = nn.heads;
    spec.branches = nn.tar ? 2 : 1;
    nn.net = nnet::Mlp(spec, store_, "p." + node + ".");
    nets_.push_back(std::move(nn));
  }
}

CevaeModel CevaeModel::for_dataset(const graph::CausalGraph& g, const Dataset& d, const TrainConfig& cfg) {
  CevaeModel m(g, d.columns(), cfg);
  m.initialize(derive_seed(cfg.seed, "cevae-init"));
  return m;
}

std::vector<std::string> CevaeModel::modeled_nodes() const {
  std::vector<std::string> out;
  for (const auto& nn : nets_) out.push_back(nn.node);
  return out;
}

const nnet::Mlp& CevaeModel::generative_net(const std::string& node) const {
  for (const auto& nn : nets_)
    if (nn.node == node) return nn.net;
  throw ContractError("no generative network for node '" + node + "'");
}

void CevaeModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  inference_.init_glorot(store_, rng);
  for (const auto& nn : nets_) nn.net.init_glorot(store_, rng);
}

std::vector<Index> CevaeModel::node_profile_columns(const std::string& node) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < profile_.size(); ++i)
    if (profile_[i].node == node) out.push_back(static_cast<Index>(i));
  return out;
}

Index CevaeModel::encoded_width(const std::string& node) const {
  Index w = 0;
  for (Index c : node_profile_columns(node)) {
    const auto& col = profile_[static_cast<std::size_t>(c)];
    w += col.kind == ColumnKind::Categorical ? col.categories : 1;
  }
  return w;
}

MatrixXd CevaeModel::encode(const std::string& node, const MatrixXd& block) const {
  const auto cols = node_profile_columns(node);
  require(static_cast<Index>(cols.size()) == block.cols(), "block width does not match node '" + node + "'");
  MatrixXd out = MatrixXd::Zero(encoded_width(node), block.rows());
  Index row = 0;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto& col = profile_[static_cast<std::size_t>(cols[j])];
    if (col.kind == ColumnKind::Categorical) {
      for (Index i = 0; i < block.rows(); ++i) {
        const double v = block(i, static_cast<Index>(j));
        const auto code = static_cast<Index>(v);
        require(v == static_cast<double>(code) && code >= 0 && code < col.categories,
                "category code out of range in column '" + col.name + "'");
        out(row + code, i) = 1.0;
      }
      row += col.categories;
    } else {
      out.row(row++) = block.col(static_cast<Index>(j)).transpose();
    }
  }
  return out;
}

CevaeModel::Prepared CevaeModel::prepare(const Dataset& d) const {
  Prepared p;
  p.n = d.rows();
  require(p.n >= 1, "dataset is empty");
  auto block_of = [&](const std::string& node) {
    const auto cols = node_profile_columns(node);
    MatrixXd b(d.rows(), static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      b.col(static_cast<Index>(j)) = d.values().col(d.column_index(profile_[static_cast<std::size_t>(cols[j])].name));
    return b;
  };
  for (const auto& node : graph_.nodes()) {
    if (node.name == latent_ || !node.observed) continue;
    const MatrixXd b = block_of(node.name);
    if (!b.allFinite()) throw ContractError("non-finite values in the columns of node '" + node.name + "'");
    p.enc[node.name] = encode(node.name, b);
  }
  p.a = p.enc.at(sensitive_).row(0).transpose();
  p.branch = binary_branches(p.a);
  Index width = 0;
  for (const auto& node : inference_nodes_) width += p.enc.at(node).rows();
  p.inf_in.resize(width, p.n);
  Index row = 0;
  for (const auto& node : inference_nodes_) {
    const auto& e = p.enc.at(node);
    p.inf_in.middleRows(row, e.rows()) = e;
    row += e.rows();
  }
  for (const auto& nn : nets_) {
    std::vector<MatrixXd> heads;
    for (const auto& cols : nn.head_columns) {
      MatrixXd o(static_cast<Index>(cols.size()), p.n);
      for (std::size_t j = 0; j < cols.size(); ++j)
        o.row(static_cast<Index>(j)) = d.values().col(d.column_index(profile_[static_cast<std::size_t>(cols[j])].name)).transpose();
      heads.push_back(std::move(o));
    }
    p.obs.push_back(std::move(heads));
  }
  return p;
}

MatrixXd CevaeModel::net_input(const NodeNet& nn, const MatrixXd& z, const std::map<std::string, MatrixXd>& enc) const {
  Index width = 0;
  for (const auto& p : nn.inputs) width += p == latent_ ? z.rows() : enc.at(p).rows();
  MatrixXd in(width, z.cols());
  Index row = 0;
  for (const auto& p : nn.inputs) {
    const MatrixXd& src = p == latent_ ? z : enc.at(p);
    in.middleRows(row, src.rows()) = src;
    row += src.rows();
  }
  return in;
}

Posterior CevaeModel::infer(const Dataset& d) const {
  const Prepared p = prepare(d);
  const auto heads = inference_.heads(inference_.raw_output(store_, p.inf_in));
  return {heads[0].mean.transpose(), heads[0].sd.transpose()};
}

ElboTerms CevaeModel::run_elbo(const Prepared& p, const std::vector<MatrixXd>& eps, bool accumulate) {
  const Index D = config_.latent_dim, n = p.n;
  const auto S = static_cast<Index>(eps.size());
  require(S >= 1, "at least one Monte-Carlo draw is required");
  for (const auto& e : eps) require(e.rows() == D && e.cols() == n, "noise draws must be D_z x n");

  const nnet::Tape inf_tape = inference_.forward(store_, p.inf_in);
  const auto mu = inf_tape.raw.topRows(D).array();
  const Eigen::ArrayXXd r = inf_tape.raw.bottomRows(D).array();
  const Eigen::ArrayXXd s = softplus(r);
  const Eigen::ArrayXXd sd = s.max(nnet::kSigmaMin);

  const double c = -1.0 / static_cast<double>(n * S);
  const RowVectorXd w = RowVectorXd::Constant(n, c);
  RowVectorXd reg = RowVectorXd::Zero(n), rx = reg, rr = reg, ry = reg, ro = reg;
  MatrixXd d_inf = MatrixXd::Zero(inf_tape.raw.rows(), n);
  std::vector<std::pair<const NodeNet*, nnet::Tape>> tapes;
  std::vector<MatrixXd> d_raws;

  for (Index smp = 0; smp < S; ++smp) {
    const Eigen::ArrayXXd e = eps[static_cast<std::size_t>(smp)].array();
    const MatrixXd z = (mu + sd * e).matrix();
    reg += (-0.5 * z.array().square() + 0.5 * e.square() + sd.log()).colwise().sum().matrix();
    MatrixXd dz = MatrixXd::Zero(D, n);
    for (std::size_t k = 0; k < nets_.size(); ++k) {
      const auto& nn = nets_[k];
      const MatrixXd in = net_input(nn, z, p.enc);
      nnet::Tape t = nn.net.forward(store_, in, nn.tar ? std::span<const Index>(p.branch) : std::span<const Index>());
      MatrixXd d_raw = MatrixXd::Zero(t.raw.rows(), n);
      RowVectorXd ll = RowVectorXd::Zero(n);
      for (std::size_t h = 0; h < nn.heads.size(); ++h) {
        MatrixXd d_head = MatrixXd::Zero(nn.heads[h].raw_width(), n);
        ll += nnet::log_prob_raw(nn.heads[h], nn.net.head_raw(t.raw, h), p.obs[k][h], accumulate ? &d_head : nullptr, &w);
        if (accumulate) d_raw.middleRows(nn.net.head_offset(h), d_head.rows()) = d_head;
      }
      switch (nn.role) {
        case Role::Covariate: rx += ll; break;
        case Role::Resolving: rr += ll; break;
        case Role::Outcome: ry += ll; break;
        default: ro += ll; break;
      }
      if (accumulate) {
        const MatrixXd d_in = nn.net.backward(store_, t, d_raw);
        if (!nn.inputs.empty() && nn.inputs.front() == latent_) dz += d_in.topRows(D);
      }
    }
    if (accumulate) {
      const Eigen::ArrayXXd dmu = c * (-z.array()) + dz.array();
      const Eigen::ArrayXXd dsd = c * (-z.array() * e + 1.0 / sd) + dz.array() * e;
      d_inf.topRows(D).array() += dmu;
      d_inf.bottomRows(D).array() += (s > nnet::kSigmaMin).select(dsd * sigmoid(r), 0.0);
    }
  }
  const RowVectorXd per_record = reg + rx + rr + ry + ro;
  for (Index i = 0; i < n; ++i)
    if (!std::isfinite(per_record(i))) {
      if (accumulate) store_.zero_grad();
      throw NumericalError("non-finite ELBO term for record " + std::to_string(i), i);
    }
  if (accumulate) inference_.backward(store_, inf_tape, d_inf);

  const double inv = 1.0 / static_cast<double>(n * S);
  ElboTerms t;
  t.reg = reg.sum() * inv;
  t.rec_x = rx.sum() * inv;
  t.rec_r = rr.sum() * inv;
  t.rec_y = ry.sum() * inv;
  t.rec_other = ro.sum() * inv;
  t.total = t.reg + t.rec_x + t.rec_r + t.rec_y + t.rec_other;
  return t;
}

ElboTerms CevaeModel::elbo(const Dataset& d, std::uint64_t seed) const {
  Rng rng(derive_seed(seed, "elbo"));
  std::vector<MatrixXd> eps;
  for (Index s = 0; s < config_.n_mc_samples; ++s) eps.push_back(standard_normal(rng, config_.latent_dim, d.rows()));
  CevaeModel scratch = *this;
  return scratch.run_elbo(prepare(d), eps, false);
}

ElboTerms CevaeModel::elbo_at(const Dataset& d, const std::vector<MatrixXd>& eps, bool accumulate) {
  return run_elbo(prepare(d), eps, accumulate);
}

std::map<std::string, MatrixXd> CevaeModel::decode(const Dataset& d, const MatrixXd& z,
                                                   const std::function<VectorXd(const std::string&)>& a_for_node,
                                                   DecodeMode mode, Rng& rng) const {
  Prepared p = prepare(d);
  require(z.rows() == p.n && z.cols() == config_.latent_dim, "latent matrix must be n x D_z");
  const MatrixXd zt = z.transpose();
  std::map<std::string, MatrixXd> out;
  for (const auto& nn : nets_) {
    const MatrixXd in = net_input(nn, zt, p.enc);
    std::vector<Index> branch;
    if (nn.tar) branch = binary_branches(a_for_node(nn.node));
    const MatrixXd raw = nn.net.raw_output(store_, in, branch);
    MatrixXd block(static_cast<Index>(node_profile_columns(nn.node).size()), p.n);
    Index row = 0;
    for (std::size_t h = 0; h < nn.heads.size(); ++h) {
      const auto params = nnet::decode_head(nn.heads[h], nn.net.head_raw(raw, h));
      const MatrixXd v = mode == DecodeMode::Mean ? nnet::head_mean(nn.heads[h], params)
                                                  : nnet::head_sample(nn.heads[h], params, rng);
      block.middleRows(row, v.rows()) = v;
      row += v.rows();
    }
    out[nn.node] = block.transpose();
    p.enc[nn.node] = encode(nn.node, out[nn.node]);
  }
  return out;
}

nlohmann::json CevaeModel::checkpoint() const {
  nlohmann::json nets = nlohmann::json::object();
  nets["q"] = nnet::to_json(inference_.spec());
  for (const auto& nn : nets_) nets["p." + nn.node] = nnet::to_json(nn.net.spec());
  return {{"version", 1},
          {"kind", "cevae"},
          {"graph", graph::to_json(graph_)},
          {"profile", to_json(profile_)},
          {"config", to_json(config_)},
          {"params", nnet::checkpoint_json(nets, store_)}};
}

CevaeModel CevaeModel::from_checkpoint(const nlohmann::json& doc) {
  require(doc.value("kind", "") == "cevae" && doc.value("version", 0) == 1, "not a version-1 cevae checkpoint");
  CevaeModel m(graph::graph_from_json(doc.at("graph")), profile_from_json(doc.at("profile")),
               train_config_from_json(doc.at("config")));
  nnet::load_checkpoint(doc.at("params"), m.store_);
  return m;
}

// ---------------------------------------------------------------- training

std::vector<ElboTerms> train(CevaeModel& model, const Dataset& d, const EpochHook& hook) {
  const auto& cfg = model.config();
  const Index n = d.rows();
  require(n >= 1, "training data is empty");
  auto opt = nnet::OptState::adam(model.params().size(), cfg.learning_rate);
  std::vector<ElboTerms> log;
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "cevae-epoch", static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const VectorXd snapshot = model.params().values();
    ElboTerms sum;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min(cfg.batch_size, n - start);
      std::vector<Index> rows(order.begin() + start, order.begin() + start + len);
      const Dataset batch = d.select_rows(rows);
      std::vector<MatrixXd> eps;
      for (Index s = 0; s < cfg.n_mc_samples; ++s) eps.push_back(standard_normal(rng, cfg.latent_dim, len));
      try {
        model.params().zero_grad();
        const ElboTerms t = model.elbo_at(batch, eps, true);
        nnet::optimizer_step(opt, model.params());
        sum += scaled(t, static_cast<double>(len));
      } catch (const NumericalError& e) {
        model.params().values() = snapshot;
        model.params().zero_grad();
        const Index rec = e.record() >= 0 ? rows[static_cast<std::size_t>(e.record())] : -1;
        throw NumericalError("training diverged in epoch " + std::to_string(epoch) + " (" + e.what() +
                                 "); parameters restored to the previous epoch",
                             rec);
      }
    }
    log.push_back(scaled(sum, 1.0 / static_cast<double>(n)));
    if (hook) hook(epoch, log.back(), model);
  }
  return log;
}

void write_epoch_log(const std::vector<ElboTerms>& log, const std::filesystem::path& csv,
                     const std::vector<double>& latent_gap) {
  const bool gap = !latent_gap.empty();
  if (gap && latent_gap.size() != log.size()) throw ContractError("latent gap log must have one entry per epoch");
  std::ofstream out(csv);
  if (!out) throw ContractError("cannot write " + csv.string());
  out << std::setprecision(10) << "epoch,reg,rec_x,rec_r,rec_y,rec_other,total" << (gap ? ",latent_gap" : "") << "\n";
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& t = log[i];
    out << i + 1 << "," << t.reg << "," << t.rec_x << "," << t.rec_r << "," << t.rec_y << "," << t.rec_other << ","
        << t.total;
    if (gap) out << "," << latent_gap[i];
    out << "\n";
  }
}

// ----------------------------------------------------------- reconstruction

namespace {

MatrixXd draw_latent(const CevaeModel& m, const Dataset& d, DecodeMode mode, std::uint64_t seed) {
  const Posterior post = m.infer(d);
  if (mode == DecodeMode::Mean) return post.mean;
  Rng rng(derive_seed(seed, "latent"));
  const MatrixXd eps = standard_normal(rng, post.mean.rows(), post.mean.cols());
  return (post.mean.array() + post.sd.array() * eps.array()).matrix();
}

Dataset assemble(const CevaeModel& m, const Dataset& d, const std::map<std::string, MatrixXd>& decoded,
                 const MatrixXd& z, const VectorXd& a) {
  std::vector<Index> keep;
  for (Index c = 0; c < static_cast<Index>(d.columns().size()); ++c)
    if (d.columns()[static_cast<std::size_t>(c)].node != m.latent()) keep.push_back(c);
  Dataset out = d.select_columns(keep);
  out.drop_noise();
  out.values().col(out.column_index(d.columns()[d.node_columns(m.sensitive()).at(0)].name)) = a;
  for (const auto& [node, block] : decoded) {
    Index j = 0;
    for (const auto& col : m.profile())
      if (col.node == node) out.values().col(out.column_index(col.name)) = block.col(j++);
  }
  DataProfile zcols;
  for (Index k = 0; k < z.cols(); ++k)
    zcols.push_back({m.latent() + "[" + std::to_string(k) + "]", m.latent(), Role::Latent, ColumnKind::Gaussian, 0, false});
  out.append_columns(zcols, z);
  return out;
}

VectorXd observed_a(const CevaeModel& m, const Dataset& d) {
  for (const auto& col : m.profile())
    if (col.node == m.sensitive()) return d.values().col(d.column_index(col.name));
  throw ContractError("data lacks the sensitive column");
}

}  // namespace

Dataset reconstruct(const CevaeModel& m, const Dataset& d, DecodeMode mode, std::uint64_t seed) {
  return counterfactual_reconstruct(m, d, APolicy::observed(), mode, seed);
}

Dataset counterfactual_reconstruct(const CevaeModel& m, const Dataset& d, const APolicy& policy, DecodeMode mode,
                                   std::uint64_t seed) {
  const MatrixXd z = draw_latent(m, d, mode, seed);
  const VectorXd a = policy.resolve(observed_a(m, d));
  Rng rng(derive_seed(seed, "decode"));
  const auto decoded = m.decode(d, z, [&](const std::string&) { return a; }, mode, rng);
  return assemble(m, d, decoded, z, a);
}

MatrixXd nested_r_star(const CevaeModel& m, const Dataset& d, const VectorXd& a_base, DecodeMode mode,
                       std::uint64_t seed, const std::optional<MatrixXd>& z,
                       const std::optional<VectorXd>& a_resolving) {
  std::vector<std::string> resolving;
  for (const auto& node : m.modeled_nodes())
    if (m.graph().node(node).role == Role::Resolving) resolving.push_back(node);
  require(!resolving.empty(), "R* needs a graph with resolving variables");
  const VectorXd a = a_resolving ? *a_resolving : observed_a(m, d);
  require(a.size() == d.rows(), "resolving sensitive values must have n entries");
  const VectorXd base = a_base.size() == 1 ? VectorXd::Constant(a.size(), a_base(0)) : a_base;
  require(base.size() == a.size(), "base sensitive values must have 1 or n entries");
  const MatrixXd latent = z ? *z : m.infer(d).mean;
  Rng rng(derive_seed(seed, "decode"));
  const auto decoded = m.decode(
      d, latent,
      [&](const std::string& node) { return m.graph().node(node).role == Role::Resolving ? a : base; }, mode, rng);
  Index width = 0;
  for (const auto& r : resolving) width += decoded.at(r).cols();
  MatrixXd out(d.rows(), width);
  Index c = 0;
  for (const auto& r : resolving) {
    out.middleCols(c, decoded.at(r).cols()) = decoded.at(r);
    c += decoded.at(r).cols();
  }
  return out;
}

}  // namespace fairtrade::cevae
