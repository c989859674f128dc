#include "fairtrade/fairpred.hpp"

#include "fairtrade/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fairtrade::fairpred {

using graph::Role;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

Feature feature_from_string(const std::string& s) {
  if (s == "Z") return Feature::Z;
  if (s == "B") return Feature::B;
  if (s == "R") return Feature::R;
  if (s == "X") return Feature::X;
  if (s == "A") return Feature::A;
  if (s == "R*") return Feature::RStar;
  throw ContractError("unknown selection item '" + s + "' (valid: Z, B, R, X, A, R*)");
}

Role feature_role(Feature f) {
  switch (f) {
    case Feature::Z: return Role::Latent;
    case Feature::B: return Role::Base;
    case Feature::R:
    case Feature::RStar: return Role::Resolving;
    case Feature::X: return Role::Covariate;
    case Feature::A: return Role::Sensitive;
  }
  return Role::Other;
}

/// Profile column names of the observed nodes with `role`, in table order.
std::vector<std::string> role_column_names(const cevae::CevaeModel& m, Role role) {
  std::vector<std::string> out;
  for (const auto& c : m.profile())
    if (m.graph().node(c.node).role == role) out.push_back(c.name);
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double test_fraction, std::uint64_t seed) {
  return train_test_split(d, test_fraction, seed);
}

}  // namespace

std::string to_string(Feature f) {
  switch (f) {
    case Feature::Z: return "Z";
    case Feature::B: return "B";
    case Feature::R: return "R";
    case Feature::X: return "X";
    case Feature::A: return "A";
    case Feature::RStar: return "R*";
  }
  return "?";
}

InputSelection InputSelection::parse(const std::string& text, std::optional<double> base_a) {
  InputSelection s;
  s.base_a = base_a;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) s.items.push_back(feature_from_string(item));
  }
  require(!s.items.empty(), "empty input selection");
  return s;
}

std::string InputSelection::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + fairpred::to_string(items[i]);
  return out;
}

bool InputSelection::contains(Feature f) const { return std::find(items.begin(), items.end(), f) != items.end(); }

void InputSelection::validate(const graph::CausalGraph& g) const {
  require(!items.empty(), "empty input selection");
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t j = i + 1; j < items.size(); ++j)
      require(items[i] != items[j], "selection lists '" + fairpred::to_string(items[i]) + "' twice");
  require(!(contains(Feature::R) && contains(Feature::RStar)), "R and R* are mutually exclusive");
  require(!contains(Feature::RStar) || base_a.has_value(), "R* needs a base sensitive value");
  if (base_a) require(*base_a == 0.0 || *base_a == 1.0, "base sensitive value must be 0 or 1");
  std::string valid;
  for (Feature f : {Feature::Z, Feature::B, Feature::R, Feature::X, Feature::A}) {
    if (g.nodes_with_role(feature_role(f)).empty()) continue;
    valid += (valid.empty() ? "" : ", ") + fairpred::to_string(f);
    if (f == Feature::R) valid += ", R*";
  }
  for (Feature f : items)
    require(!g.nodes_with_role(feature_role(f)).empty(),
            "selection item '" + fairpred::to_string(f) + "' has no node in the graph (valid: " + valid + ")");
}

std::vector<InputSelection> default_sweep(double base_a) {
  std::vector<InputSelection> out;
  for (const char* s : {"Z", "Z,B", "Z,B,R*", "Z,B,R,X", "Z,B,R,X,A"}) out.push_back(InputSelection::parse(s, base_a));
  return out;
}

Index selection_width(const cevae::CevaeModel& m, const InputSelection& sel) {
  Index w = 0;
  for (Feature f : sel.items)
    w += f == Feature::Z ? m.latent_dim() : static_cast<Index>(role_column_names(m, feature_role(f)).size());
  return w;
}

MatrixXd build_inputs(const cevae::CevaeModel& m, const Dataset& d, const InputSelection& sel,
                      const FeatureOptions& opt) {
  sel.validate(m.graph());
  const Dataset& source = opt.abduction ? *opt.abduction : d;
  require(source.rows() == d.rows(), "abduction records must match the scored records");
  MatrixXd out(d.rows(), selection_width(m, sel));
  std::optional<MatrixXd> z;
  auto latent = [&]() -> const MatrixXd& {
    if (!z) {
      const auto post = m.infer(source);
      if (opt.sample_z) {
        Rng rng(derive_seed(opt.seed, "aux-z"));
        z = (post.mean.array() + post.sd.array() * standard_normal(rng, post.mean.rows(), post.mean.cols()).array())
                .matrix();
      } else {
        z = post.mean;
      }
    }
    return *z;
  };
  Index col = 0;
  for (Feature f : sel.items) {
    MatrixXd block;
    if (f == Feature::Z) {
      block = latent();
    } else if (f == Feature::RStar) {
      block = cevae::nested_r_star(m, d, VectorXd::Constant(1, *sel.base_a), cevae::DecodeMode::Mean, opt.seed,
                                   latent(), opt.a_at_resolving);
    } else {
      block = columns_matrix(d, role_column_names(m, feature_role(f)));
    }
    out.middleCols(col, block.cols()) = block;
    col += block.cols();
  }
  return out;
}

std::vector<std::string> raw_feature_columns(const Dataset& d, bool include_sensitive) {
  std::vector<std::string> out;
  for (const auto& c : d.columns()) {
    if (!c.observed || c.role == Role::Outcome || c.role == Role::Latent) continue;
    if (c.role == Role::Sensitive && !include_sensitive) continue;
    out.push_back(c.name);
  }
  return out;
}

MatrixXd columns_matrix(const Dataset& d, const std::vector<std::string>& names) {
  MatrixXd x(d.rows(), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) x.col(static_cast<Index>(j)) = d.values().col(d.column_index(names[j]));
  return x;
}

VectorXd outcome_labels(const Dataset& d) {
  const auto cols = d.role_columns(Role::Outcome);
  require(cols.size() == 1, "dataset needs exactly one outcome column");
  return d.values().col(cols.front());
}

nlohmann::json to_json(const AuxConfig& c) {
  return {{"hidden_width", c.hidden_width}, {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},     {"seed", c.seed}};
}

AuxConfig aux_config_from_json(const nlohmann::json& j) {
  AuxConfig c;
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

AuxModel::AuxModel(Index input_dim, Index hidden_width) {
  require(input_dim >= 1, "aux model needs at least one feature");
  require(hidden_width >= 0, "hidden width must be >= 0");
  nnet::MlpSpec spec;
  spec.input_dim = input_dim;
  if (hidden_width > 0) spec.hidden_dims = {hidden_width};
  spec.hidden_activation = nnet::Activation::ReLU;
  spec.heads = {nnet::HeadSpec::bernoulli(1)};
  net_ = nnet::Mlp(spec, store_, "aux.");
  feature_mean = VectorXd::Zero(input_dim);
  feature_scale = VectorXd::Ones(input_dim);
}

namespace {

MatrixXd standardized(const AuxModel& m, const MatrixXd& features) {
  require(features.cols() == m.input_dim(), "feature width " + std::to_string(features.cols()) +
                                                " does not match the model input width " + std::to_string(m.input_dim()));
  require(features.allFinite(), "features must be finite");
  return ((features.rowwise() - m.feature_mean.transpose()).array().rowwise() / m.feature_scale.transpose().array())
      .matrix()
      .transpose();
}

}  // namespace

double AuxModel::bce(const MatrixXd& features, const VectorXd& labels, bool accumulate) {
  require(labels.size() == features.rows(), "labels must match the feature rows");
  const MatrixXd x = standardized(*this, features);
  const Index n = x.cols();
  const nnet::Tape tape = net_.forward(store_, x);
  const RowVectorXd w = RowVectorXd::Constant(n, -1.0 / static_cast<double>(n));
  MatrixXd d_raw = MatrixXd::Zero(tape.raw.rows(), n);
  const RowVectorXd ll = nnet::log_prob_raw(net_.spec().heads[0], tape.raw, labels.transpose(),
                                           accumulate ? &d_raw : nullptr, &w);
  if (accumulate) net_.backward(store_, tape, d_raw);
  return -ll.mean();
}

AuxModel train_aux(const MatrixXd& features, const VectorXd& labels, const AuxConfig& cfg) {
  require(cfg.learning_rate > 0.0 && cfg.batch_size >= 1 && cfg.epochs >= 0, "invalid aux configuration");
  require(features.rows() >= 1 && labels.size() == features.rows(), "aux training needs matching features and labels");
  for (Index i = 0; i < labels.size(); ++i) require(labels(i) == 0.0 || labels(i) == 1.0, "aux labels must be 0 or 1");
  AuxModel m(features.cols(), cfg.hidden_width);
  const Index n = features.rows();
  m.feature_mean = features.colwise().mean().transpose();
  for (Index j = 0; j < features.cols(); ++j) {
    const double sd = std::sqrt((features.col(j).array() - m.feature_mean(j)).square().mean());
    m.feature_scale(j) = sd > 1e-12 ? sd : 1.0;
  }
  const double pos = labels.sum();
  if (pos == 0.0 || pos == static_cast<double>(n)) m.warnings.push_back("labels contain a single class");

  Rng init(derive_seed(cfg.seed, "aux-init"));
  m.net().init_glorot(m.params(), init);
  auto opt = nnet::OptState::rmsprop(m.params().size(), cfg.learning_rate);
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "aux-epoch", static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min(cfg.batch_size, n - start);
      MatrixXd xb(len, features.cols());
      VectorXd yb(len);
      for (Index i = 0; i < len; ++i) {
        const Index r = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = features.row(r);
        yb(i) = labels(r);
      }
      m.params().zero_grad();
      sum += m.bce(xb, yb, true) * static_cast<double>(len);
      nnet::optimizer_step(opt, m.params());
    }
    m.loss_curve.push_back(sum / static_cast<double>(n));
  }
  return m;
}

VectorXd predict(const AuxModel& m, const MatrixXd& features) {
  const MatrixXd x = standardized(m, features);
  const MatrixXd raw = m.net().raw_output(m.params(), x);
  return nnet::decode_head(m.spec().heads[0], raw).prob.row(0).transpose();
}

double accuracy(const VectorXd& p, const VectorXd& labels) {
  require(p.size() == labels.size() && p.size() > 0, "accuracy needs matching non-empty columns");
  double ok = 0.0;
  for (Index i = 0; i < p.size(); ++i) ok += round_label(p(i)) == labels(i) ? 1.0 : 0.0;
  return ok / static_cast<double>(p.size());
}

double accuracy(const AuxModel& m, const MatrixXd& features, const VectorXd& labels) {
  return accuracy(predict(m, features), labels);
}

nlohmann::json to_json(const AuxModel& m) {
  const auto spec = nnet::to_json(m.spec());
  return {{"version", 1},
          {"kind", "aux"},
          {"spec", spec},
          {"feature_mean", std::vector<double>(m.feature_mean.data(), m.feature_mean.data() + m.feature_mean.size())},
          {"feature_scale", std::vector<double>(m.feature_scale.data(), m.feature_scale.data() + m.feature_scale.size())},
          {"params", nnet::checkpoint_json(spec, m.params())}};
}

AuxModel aux_model_from_json(const nlohmann::json& j) {
  require(j.value("kind", "") == "aux" && j.value("version", 0) == 1, "not a version-1 aux model");
  const auto spec = nnet::mlp_spec_from_json(j.at("spec"));
  AuxModel m(spec.input_dim, spec.hidden_dims.empty() ? 0 : spec.hidden_dims.front());
  require(m.spec() == spec, "unsupported aux network shape");
  const auto mean = j.at("feature_mean").get<std::vector<double>>();
  const auto scale = j.at("feature_scale").get<std::vector<double>>();
  require(static_cast<Index>(mean.size()) == spec.input_dim && scale.size() == mean.size(), "feature moments do not match the input width");
  m.feature_mean = Eigen::Map<const VectorXd>(mean.data(), spec.input_dim);
  m.feature_scale = Eigen::Map<const VectorXd>(scale.data(), spec.input_dim);
  nnet::load_checkpoint(j.at("params"), m.params());
  return m;
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.values = std::move(values);
  s.mean = stats::mean(s.values);
  s.std = stats::stddev(s.values);
  return s;
}

BaselineTable baselines(const Dataset& d, const AuxConfig& cfg, Index reps, double test_fraction) {
  require(reps >= 1, "baselines need at least one repetition");
  const auto cols = raw_feature_columns(d, true);
  std::vector<double> mlp, lr;
  for (Index r = 0; r < reps; ++r) {
    const auto [train, test] = split(d, test_fraction, derive_seed(cfg.seed, "baseline-split", static_cast<std::uint64_t>(r)));
    const MatrixXd xtr = columns_matrix(train, cols), xte = columns_matrix(test, cols);
    const VectorXd ytr = outcome_labels(train), yte = outcome_labels(test);
    AuxConfig c = cfg;
    c.seed = derive_seed(cfg.seed, "baseline-mlp", static_cast<std::uint64_t>(r));
    mlp.push_back(accuracy(train_aux(xtr, ytr, c), xte, yte));
    c.hidden_width = 0;
    c.seed = derive_seed(cfg.seed, "baseline-lr", static_cast<std::uint64_t>(r));
    lr.push_back(accuracy(train_aux(xtr, ytr, c), xte, yte));
  }
  return {summarize(mlp), summarize(lr)};
}

std::vector<SweepRow> sweep(const cevae::CevaeModel& m, const Dataset& d, const std::vector<InputSelection>& selections,
                            const AuxConfig& cfg, Index reps, double test_fraction) {
  require(reps >= 1, "sweep needs at least one repetition");
  require(!selections.empty(), "sweep needs at least one selection");
  for (const auto& s : selections) s.validate(m.graph());
  std::vector<std::vector<double>> acc(selections.size()), sp(selections.size());
  const std::string a_col = role_column_names(m, Role::Sensitive).at(0);
  for (Index r = 0; r < reps; ++r) {
    const auto [train, test] = split(d, test_fraction, derive_seed(cfg.seed, "sweep-split", static_cast<std::uint64_t>(r)));
    const VectorXd ytr = outcome_labels(train), yte = outcome_labels(test);
    const VectorXd ate = test.values().col(test.column_index(a_col));
    for (std::size_t k = 0; k < selections.size(); ++k) {
      AuxConfig c = cfg;
      c.seed = derive_seed(cfg.seed, "sweep-aux", static_cast<std::uint64_t>(r));
      const auto aux = train_aux(build_inputs(m, train, selections[k]), ytr, c);
      const VectorXd p = predict(aux, build_inputs(m, test, selections[k]));
      acc[k].push_back(accuracy(p, yte));
      sp[k].push_back(metrics::statistical_parity_score(p, ate));
    }
  }
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < selections.size(); ++k) rows.push_back({selections[k], summarize(acc[k]), summarize(sp[k])});
  return rows;
}

metrics::Predictor oracle_predictor(const cevae::CevaeModel& m, const AuxModel& aux, const InputSelection& sel) {
  sel.validate(m.graph());
  std::optional<std::string> resolving;
  const auto rs = m.graph().nodes_with_role(Role::Resolving);
  if (!rs.empty()) resolving = rs.front();
  return [&m, aux, sel, resolving](const metrics::OracleRecords& r) {
    FeatureOptions opt;
    opt.abduction = r.factual;
    if (resolving) {
      if (auto it = r.a_at.find(*resolving); it != r.a_at.end()) opt.a_at_resolving = it->second;
    }
    return predict(aux, build_inputs(m, *r.records, sel, opt));
  };
}

}  // namespace fairtrade::fairpred
