#include "fairtrade/scm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace fairtrade::scm {

using graph::DirectedPath;
using graph::PathSet;
using graph::Role;

const MatrixXd& ParentValues::operator[](const std::string& name) const {
  for (std::size_t i = 0; i < names_->size(); ++i)
    if ((*names_)[i] == name) return *values_[i];
  throw ContractError("mechanism has no parent '" + name + "'");
}

Scm::Scm(graph::CausalGraph g, std::map<std::string, Mechanism> mechanisms) : graph_(std::move(g)) {
  order_ = graph::topological_order(graph_);
  for (const auto& [name, m] : mechanisms)
    if (!graph_.has_node(name)) throw ContractError("mechanism for unknown node '" + name + "'");
  for (const auto& node : order_) {
    auto it = mechanisms.find(node);
    if (it == mechanisms.end()) throw ContractError("node '" + node + "' has no mechanism");
    auto& m = it->second;
    std::vector<std::string> declared = m.parents;
    std::sort(declared.begin(), declared.end());
    if (declared != graph_.parents(node))
      throw ContractError("mechanism parents of '" + node + "' do not match the graph edges");
    if (m.dim < 1 || m.noise_dim < 0) throw ContractError("mechanism of '" + node + "' has invalid dimensions");
    if (!m.evaluate || (m.noise_dim > 0 && !m.draw_noise))
      throw ContractError("mechanism of '" + node + "' is incomplete");
    if (m.kinds.empty()) m.kinds.assign(static_cast<std::size_t>(m.dim), ColumnKind::Gaussian);
    if (static_cast<Index>(m.kinds.size()) != m.dim) throw ContractError("mechanism kinds of '" + node + "' mismatch dim");
    mechanisms_.push_back(std::move(m));
  }
}

Index Scm::index(const std::string& node) const {
  auto it = std::find(order_.begin(), order_.end(), node);
  if (it == order_.end()) throw ContractError("scm has no node '" + node + "'");
  return it - order_.begin();
}

std::string Scm::noise_name(const std::string& node, Index k) { return "U_" + node + "[" + std::to_string(k) + "]"; }

Interventions set_value(const std::string& node, double v) { return {{node, MatrixXd::Constant(1, 1, v)}}; }

std::vector<MatrixXd> draw_noise(const Scm& scm, Index n, std::uint64_t seed) {
  if (n < 1) throw ContractError("sample size must be >= 1");
  std::vector<MatrixXd> noise;
  for (std::size_t i = 0; i < scm.order().size(); ++i) {
    const auto& m = scm.mechanism(static_cast<Index>(i));
    Rng rng(derive_seed(seed, "noise:" + scm.order()[i]));
    MatrixXd u = m.noise_dim > 0 ? m.draw_noise(rng, n) : MatrixXd(n, 0);
    if (u.rows() != n || u.cols() != m.noise_dim)
      throw ContractError("noise of '" + scm.order()[i] + "' has the wrong shape");
    noise.push_back(std::move(u));
  }
  return noise;
}

namespace {

void check_interventions(const Scm& scm, const Interventions& iv) {
  for (const auto& [node, value] : iv) {
    if (node.rfind("U_", 0) == 0 && !scm.graph().has_node(node))
      throw ContractError("cannot intervene on exogenous noise '" + node + "'");
    const auto& m = scm.mechanism(node);
    if (value.cols() != m.dim) throw ContractError("intervention on '" + node + "' has the wrong width");
  }
}

MatrixXd broadcast(const MatrixXd& v, Index n) {
  if (v.rows() == n) return v;
  if (v.rows() == 1) return v.replicate(n, 1);
  throw ContractError("intervention value must have 1 or n rows");
}

MatrixXd run_mechanism(const Scm& scm, Index i, const std::vector<const MatrixXd*>& parents, const MatrixXd& noise) {
  const auto& m = scm.mechanism(i);
  MatrixXd v = m.evaluate(ParentValues(m.parents, parents), noise);
  if (v.rows() != noise.rows() || v.cols() != m.dim)
    throw ContractError("mechanism of '" + scm.order()[static_cast<std::size_t>(i)] + "' returned the wrong shape");
  return v;
}

}  // namespace

Sample evaluate(const Scm& scm, std::vector<MatrixXd> noise, const Interventions& interventions) {
  check_interventions(scm, interventions);
  if (noise.size() != scm.order().size()) throw ContractError("noise list does not match the scm nodes");
  const Index n = noise.front().rows();
  Sample s;
  s.values.resize(noise.size());
  for (std::size_t i = 0; i < scm.order().size(); ++i) {
    const auto& node = scm.order()[i];
    if (auto it = interventions.find(node); it != interventions.end()) {
      s.values[i] = broadcast(it->second, n);
      continue;
    }
    std::vector<const MatrixXd*> parents;
    for (const auto& p : scm.mechanism(static_cast<Index>(i)).parents) parents.push_back(&s.values[scm.index(p)]);
    s.values[i] = run_mechanism(scm, static_cast<Index>(i), parents, noise[i]);
  }
  s.noise = std::move(noise);
  return s;
}

Sample sample(const Scm& scm, Index n, std::uint64_t seed) { return evaluate(scm, draw_noise(scm, n, seed)); }

namespace {

std::string value_name(const std::string& node, Index dim, Index k) {
  return dim == 1 ? node : node + "[" + std::to_string(k) + "]";
}

}  // namespace

Dataset to_dataset(const Scm& scm, const Sample& s, bool with_noise) {
  DataProfile profile;
  const Index n = s.rows();
  Index width = 0;
  for (const auto& node : scm.order()) width += scm.mechanism(node).dim;
  MatrixXd values(n, width);
  Index col = 0;
  std::vector<std::string> noise_names;
  Index noise_width = 0;
  for (std::size_t i = 0; i < scm.order().size(); ++i) {
    const auto& node = scm.order()[i];
    const auto& m = scm.mechanism(static_cast<Index>(i));
    const auto& gn = scm.graph().node(node);
    for (Index k = 0; k < m.dim; ++k) {
      const auto kind = m.kinds[static_cast<std::size_t>(k)];
      profile.push_back({value_name(node, m.dim, k), node, gn.role, kind,
                         kind == ColumnKind::Categorical ? m.categories : 0, gn.observed});
    }
    values.middleCols(col, m.dim) = s.values[i];
    col += m.dim;
    for (Index k = 0; k < m.noise_dim; ++k) noise_names.push_back(Scm::noise_name(node, k));
    noise_width += m.noise_dim;
  }
  Dataset d(std::move(profile), std::move(values));
  if (with_noise && s.has_noise()) {
    MatrixXd noise(n, noise_width);
    Index c = 0;
    for (const auto& u : s.noise) {
      noise.middleCols(c, u.cols()) = u;
      c += u.cols();
    }
    d.set_noise(std::move(noise_names), std::move(noise));
  }
  return d;
}

Sample from_dataset(const Scm& scm, const Dataset& d) {
  if (!d.has_noise()) throw ContractError("records carry no exogenous noise; exact abduction is impossible");
  std::vector<MatrixXd> noise;
  for (const auto& node : scm.order()) {
    const auto& m = scm.mechanism(node);
    MatrixXd u(d.rows(), m.noise_dim);
    for (Index k = 0; k < m.noise_dim; ++k) {
      const auto name = Scm::noise_name(node, k);
      auto it = std::find(d.noise_names().begin(), d.noise_names().end(), name);
      if (it == d.noise_names().end()) throw ContractError("records lack noise column '" + name + "'");
      u.col(k) = d.noise().col(it - d.noise_names().begin());
    }
    noise.push_back(std::move(u));
  }
  Sample s = evaluate(scm, std::move(noise));
  // Recorded values win where present so that the factual record is reproduced verbatim.
  for (std::size_t i = 0; i < scm.order().size(); ++i) {
    const auto& node = scm.order()[i];
    if (d.has_node(node)) {
      MatrixXd block = d.node_block(node);
      if (block.cols() == s.values[i].cols()) s.values[i] = std::move(block);
    }
  }
  return s;
}

Dataset sample_dataset(const Scm& scm, Index n, std::uint64_t seed) { return to_dataset(scm, sample(scm, n, seed)); }

Dataset intervene_sample(const Scm& scm, const Interventions& interventions, Index n, std::uint64_t seed) {
  return to_dataset(scm, evaluate(scm, draw_noise(scm, n, seed), interventions));
}

Sample counterfactual(const Scm& scm, const Sample& factual, const Interventions& interventions) {
  if (!factual.has_noise()) throw ContractError("counterfactuals need the factual exogenous noise");
  check_interventions(scm, interventions);
  const Index n = factual.rows();
  Sample s;
  s.noise = factual.noise;
  s.values.resize(scm.order().size());
  std::vector<bool> changed(scm.order().size(), false);
  for (std::size_t i = 0; i < scm.order().size(); ++i) {
    const auto& node = scm.order()[i];
    if (auto it = interventions.find(node); it != interventions.end()) {
      s.values[i] = broadcast(it->second, n);
      changed[i] = true;
      continue;
    }
    const auto& m = scm.mechanism(static_cast<Index>(i));
    bool touched = false;
    std::vector<const MatrixXd*> parents;
    for (const auto& p : m.parents) {
      const auto j = static_cast<std::size_t>(scm.index(p));
      touched = touched || changed[j];
      parents.push_back(&s.values[j]);
    }
    if (touched) {
      s.values[i] = run_mechanism(scm, static_cast<Index>(i), parents, s.noise[i]);
      changed[i] = true;
    } else {
      s.values[i] = factual.values[i];
    }
  }
  return s;
}

Dataset counterfactual_record(const Scm& scm, const Dataset& records, const Interventions& interventions) {
  const Sample cf = counterfactual(scm, from_dataset(scm, records), interventions);
  Dataset out = records;
  for (std::size_t i = 0; i < scm.order().size(); ++i)
    if (records.has_node(scm.order()[i])) out.set_node_block(scm.order()[i], cf.values[i]);
  return out;
}

// ------------------------------------------------------------------ nested

namespace {

MatrixXd sensitive_column(const VectorXd& v, Index n) {
  if (v.size() == n) return v;
  if (v.size() == 1) return MatrixXd::Constant(n, 1, v(0));
  throw ContractError("sensitive values must have 1 or n entries");
}

}  // namespace

NestedWorld::NestedWorld(const Scm& scm, const Sample& factual, PathSet active_paths, VectorXd a_active,
                         VectorXd a_base)
    : scm_(&scm), factual_(&factual), paths_(std::move(active_paths)) {
  if (!factual.has_noise()) throw ContractError("nested counterfactuals need the factual exogenous noise");
  sensitive_ = scm.graph().sensitive();
  outcome_ = scm.graph().outcome();
  if (scm.mechanism(sensitive_).dim != 1) throw ContractError("sensitive node must be one-dimensional");
  a_active_ = sensitive_column(a_active, factual.rows());
  a_base_ = sensitive_column(a_base, factual.rows());
}

NestedWorld NestedWorld::full(const Scm& scm, const Sample& factual, VectorXd a_active, VectorXd a_base) {
  NestedWorld w(scm, factual, {}, std::move(a_active), std::move(a_base));
  w.all_active_ = true;
  return w;
}

bool NestedWorld::path_active(const DirectedPath& p) const { return all_active_ || paths_.contains(p); }

const MatrixXd& NestedWorld::value(const std::string& node, const DirectedPath& suffix) {
  if (suffix.empty() || suffix.front() != node) throw ContractError("suffix must start at the queried node");
  const auto key = std::make_pair(node, graph::to_string(suffix));
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  const Index i = scm_->index(node);
  MatrixXd v;
  if (node == sensitive_) {
    v = path_active(suffix) ? a_active_ : a_base_;
  } else if (!scm_->graph().is_descendant(node, sensitive_)) {
    v = factual_->values[static_cast<std::size_t>(i)];
  } else {
    const auto& m = scm_->mechanism(i);
    std::vector<MatrixXd> held;
    held.reserve(m.parents.size());
    for (const auto& p : m.parents) {
      DirectedPath longer{p};
      longer.insert(longer.end(), suffix.begin(), suffix.end());
      held.push_back(value(p, longer));
    }
    std::vector<const MatrixXd*> parents;
    for (const auto& h : held) parents.push_back(&h);
    v = run_mechanism(*scm_, i, parents, factual_->noise[static_cast<std::size_t>(i)]);
  }
  return memo_.emplace(key, std::move(v)).first->second;
}

const MatrixXd& NestedWorld::outcome() { return value(outcome_, {outcome_}); }

const MatrixXd& NestedWorld::input(const std::string& node) {
  if (node == outcome_) throw ContractError("the outcome is not a predictor input");
  return value(node, {node, outcome_});
}

PseEstimate pse(const Scm& scm, const NestedCounterfactual& nc, Index n, std::uint64_t seed) {
  const auto& g = scm.graph();
  const auto all = graph::enumerate_paths(g);
  for (const auto& p : nc.paths)
    if (std::find(all.begin(), all.end(), p) == all.end())
      throw ContractError("'" + graph::to_string(p) + "' is not a path from the sensitive node to the outcome");
  const auto id = graph::check_identifiability(g, nc.paths);
  if (!id.identifiable)
    throw ValidationError("path set is not identifiable: recanting witness '" + *id.witness + "' (" +
                          graph::to_string(id.active_path) + " active, " + graph::to_string(id.inactive_path) +
                          " inactive)");
  if (scm.mechanism(g.outcome()).dim != 1) throw ContractError("pse needs a one-dimensional outcome");
  const Sample factual = sample(scm, n, seed);
  const VectorXd active = VectorXd::Constant(1, nc.active), base = VectorXd::Constant(1, nc.base);
  NestedWorld on(scm, factual, nc.paths, active, base);
  NestedWorld off(scm, factual, {}, active, base);
  const VectorXd diff = on.outcome().col(0) - off.outcome().col(0);
  PseEstimate e;
  e.n = n;
  e.value = diff.mean();
  if (n > 1) {
    const double var = (diff.array() - e.value).square().sum() / static_cast<double>(n - 1);
    e.std_error = std::sqrt(var / static_cast<double>(n));
  }
  if (!std::isfinite(e.value)) throw NumericalError("pse estimate is not finite");
  return e;
}

// -------------------------------------------------------------- generators

namespace {

auto normal_noise(Index dim) {
  return [dim](Rng& rng, Index n) { return standard_normal(rng, n, dim); };
}

auto uniform_noise(Index dim) {
  return [dim](Rng& rng, Index n) { return standard_uniform(rng, n, dim); };
}

MatrixXd bernoulli_from(const Eigen::ArrayXXd& prob, const MatrixXd& u) {
  return (u.array() < prob).cast<double>().matrix();
}

}  // namespace

VectorXd appendix_logit(const AppendixDgpParams& p, const VectorXd& a, const MatrixXd& x, const VectorXd& z) {
  return (p.gamma_y + p.theta_a * a.array() + p.theta_x * x.array().square().rowwise().sum() + p.theta_z * z.array())
      .matrix();
}

Scm appendix_dgp(const AppendixDgpParams& p) {
  if (!(p.sigma_z > 0.0)) throw ContractError("sigma_z must be positive");
  if (!(p.p_a > 0.0 && p.p_a < 1.0)) throw ContractError("p_a must lie in (0,1)");
  std::map<std::string, Mechanism> m;
  m["A"] = {{}, 1, 1, {ColumnKind::Bernoulli}, 0, uniform_noise(1),
            [p](const ParentValues&, const MatrixXd& u) { return bernoulli_from(Eigen::ArrayXXd::Constant(u.rows(), 1, p.p_a), u); }};
  m["Z"] = {{}, 1, 1, {}, 0, normal_noise(1),
            [p](const ParentValues&, const MatrixXd& u) { return MatrixXd((p.mu_z + p.sigma_z * u.array()).matrix()); }};
  m["X"] = {{"A", "Z"}, 3, 3, {}, 0, normal_noise(3), [p](const ParentValues& pv, const MatrixXd& u) {
              const auto a = pv["A"].col(0).array();
              const auto z = pv["Z"].col(0).array();
              const Eigen::ArrayXd sd = (p.b_x + p.c_x * z).max(p.a_x);
              MatrixXd x(u.rows(), 3);
              x.col(0) = (-(p.gamma_x + a) + sd * u.col(0).array()).matrix();
              x.col(1) = (z + sd * u.col(1).array()).matrix();
              x.col(2) = (p.gamma_x + a + sd * u.col(2).array()).matrix();
              return x;
            }};
  m["Y"] = {{"A", "X", "Z"}, 1, 1, {ColumnKind::Bernoulli}, 0, uniform_noise(1),
            [p](const ParentValues& pv, const MatrixXd& u) {
              const VectorXd logit = appendix_logit(p, pv["A"].col(0), pv["X"], pv["Z"].col(0));
              return bernoulli_from(sigmoid(logit.array()), u);
            }};
  return Scm(graph::builtin("fig1a"), std::move(m));
}

Scm linear_gaussian(const graph::CausalGraph& g, const LinearGaussianSpec& spec) {
  for (const auto& [edge, c] : spec.coefficients)
    if (!g.has_edge(edge.first, edge.second))
      throw ContractError("coefficient for missing edge " + edge.first + "->" + edge.second);
  std::map<std::string, Mechanism> m;
  for (const auto& node : g.nodes()) {
    const auto parents = g.parents(node.name);
    if (node.role == Role::Sensitive) {
      if (!parents.empty()) throw ContractError("the sensitive node of a linear scm must be a root");
      const double pa = spec.p_sensitive;
      m[node.name] = {{}, 1, 1, {ColumnKind::Bernoulli}, 0, uniform_noise(1),
                      [pa](const ParentValues&, const MatrixXd& u) {
                        return bernoulli_from(Eigen::ArrayXXd::Constant(u.rows(), 1, pa), u);
                      }};
      continue;
    }
    std::vector<double> coef;
    for (const auto& p : parents) {
      auto it = spec.coefficients.find({p, node.name});
      coef.push_back(it == spec.coefficients.end() ? 0.0 : it->second);
    }
    auto sd_it = spec.noise_sd.find(node.name);
    const double sd = sd_it == spec.noise_sd.end() ? 1.0 : sd_it->second;
    const double tau = spec.slope_sd;
    const Index k = static_cast<Index>(parents.size());
    const Index noise_dim = 1 + (tau > 0.0 ? k : 0);
    m[node.name] = {parents, 1, noise_dim, {}, 0, normal_noise(noise_dim),
                    [coef, sd, tau, k](const ParentValues& pv, const MatrixXd& u) {
                      VectorXd v = sd * u.col(0);
                      for (Index j = 0; j < k; ++j) {
                        const auto& x = pv[static_cast<std::size_t>(j)].col(0).array();
                        if (tau > 0.0)
                          v.array() += (coef[static_cast<std::size_t>(j)] + tau * u.col(1 + j).array()) * x;
                        else
                          v.array() += coef[static_cast<std::size_t>(j)] * x;
                      }
                      return MatrixXd(v);
                    }};
  }
  return Scm(g, std::move(m));
}

Scm fig1c_synthetic(const Fig1cParams& p) {
  std::map<std::string, Mechanism> m;
  m["Z"] = {{}, 2, 2, {}, 0, normal_noise(2), [](const ParentValues&, const MatrixXd& u) { return u; }};
  m["B"] = {{}, 2, 2, {}, 0, normal_noise(2), [](const ParentValues&, const MatrixXd& u) { return u; }};
  m["A"] = {{}, 1, 1, {ColumnKind::Bernoulli}, 0, uniform_noise(1), [](const ParentValues&, const MatrixXd& u) {
              return bernoulli_from(Eigen::ArrayXXd::Constant(u.rows(), 1, 0.5), u);
            }};
  m["X"] = {{"A", "B", "Z"}, 3, 3, {}, 0, normal_noise(3), [p](const ParentValues& pv, const MatrixXd& u) {
              Eigen::Matrix<double, 2, 3> wz, wb;
              wz << 1.0, 0.5, 0.0, 0.0, 0.8, -1.0;
              wb << 0.6, 0.0, 0.4, -0.3, 0.7, 0.0;
              const Eigen::RowVector3d wa(1.0, -1.0, 0.5);
              MatrixXd x = pv["Z"] * wz + pv["B"] * wb + p.x_noise * u;
              x += p.a_to_x * (pv["A"].col(0).array() - 0.5).matrix() * wa;
              return x;
            }};
  m["R"] = {{"A", "B", "X", "Z"}, 2, 2, {ColumnKind::Bernoulli, ColumnKind::Bernoulli}, 0, uniform_noise(2),
            [p](const ParentValues& pv, const MatrixXd& u) {
              Eigen::Matrix<double, 3, 2> wx;
              wx << 0.8, 0.0, 0.0, 0.6, -0.5, 0.5;
              Eigen::Matrix<double, 2, 2> wz, wb;
              wz << 0.7, 0.0, 0.0, 0.7;
              wb << 0.4, 0.0, 0.0, -0.4;
              const Eigen::RowVector2d wa(1.0, -1.0);
              MatrixXd logit = pv["X"] * wx + pv["Z"] * wz + pv["B"] * wb;
              logit += 2.0 * p.a_to_r * (pv["A"].col(0).array() - 0.5).matrix() * wa;
              return bernoulli_from(sigmoid(logit.array()), u);
            }};
  m["Y"] = {{"A", "B", "R", "X", "Z"}, 1, 1, {ColumnKind::Bernoulli}, 0, uniform_noise(1),
            [p](const ParentValues& pv, const MatrixXd& u) {
              const Eigen::Vector2d wz(1.2, -0.8), wb(0.9, 0.6), wr(1.2, 1.2);
              const Eigen::Vector3d wx(0.9, -0.7, 0.6);
              VectorXd logit = pv["Z"] * wz + pv["B"] * wb + pv["X"] * wx + pv["R"] * wr;
              logit.array() += -1.2 + 2.0 * p.a_to_y * (pv["A"].col(0).array() - 0.5);
              logit *= p.y_scale;
              return bernoulli_from(sigmoid(logit.array()), u);
            }};
  return Scm(graph::builtin("fig1c"), std::move(m));
}

namespace {

/// Adapts a mechanism over a subset of parents to the full fig2 parent list.
Mechanism widen(const std::string& node, Mechanism inner, const std::vector<std::string>& parents) {
  for (const auto& p : inner.parents)
    if (std::find(parents.begin(), parents.end(), p) == parents.end())
      throw ContractError("mechanism of '" + node + "' references '" + p + "', which is not a parent in fig2");
  Mechanism out = inner;
  out.parents = parents;
  std::vector<std::size_t> pick;
  for (const auto& p : inner.parents)
    pick.push_back(static_cast<std::size_t>(std::find(parents.begin(), parents.end(), p) - parents.begin()));
  auto eval = inner.evaluate;
  auto names = inner.parents;
  out.evaluate = [eval, names, pick](const ParentValues& pv, const MatrixXd& u) {
    std::vector<const MatrixXd*> sub;
    for (auto k : pick) sub.push_back(&pv[k]);
    return eval(ParentValues(names, sub), u);
  };
  return out;
}

}  // namespace

Scm semi_synthetic_fig2(const Fig2Config& cfg) {
  if (cfg.covariates < 1) throw ContractError("fig2 needs at least one covariate");
  const auto g = graph::builtin("fig2");
  const Index d = cfg.covariates;
  std::map<std::string, Mechanism> m;
  m["Z"] = {{}, 1, 1, {}, 0, normal_noise(1), [](const ParentValues&, const MatrixXd& u) { return u; }};
  m["A"] = {{}, 1, 1, {ColumnKind::Bernoulli}, 0, uniform_noise(1), [](const ParentValues&, const MatrixXd& u) {
              return bernoulli_from(Eigen::ArrayXXd::Constant(u.rows(), 1, 0.5), u);
            }};
  m["X"] = {{"A", "Z"}, d, d, {}, 0, normal_noise(d), [d](const ParentValues& pv, const MatrixXd& u) {
              RowVectorXd wz(d), wa(d);
              for (Index j = 0; j < d; ++j) {
                wz(j) = 0.5 + 0.5 * static_cast<double>(j % 3) / 2.0;
                wa(j) = (j % 2 == 0 ? 1.0 : -1.0) * 0.5;
              }
              return MatrixXd(pv["Z"] * wz + pv["A"] * wa + u);
            }};
  m["T"] = {{"A", "Z"}, 1, 1, {ColumnKind::Bernoulli}, 0, uniform_noise(1),
            [](const ParentValues& pv, const MatrixXd& u) {
              const Eigen::ArrayXXd logit = 1.0 * pv["Z"].array() + 0.8 * (pv["A"].array() - 0.5);
              return bernoulli_from(sigmoid(logit), u);
            }};
  const double te = cfg.treatment_effect, se = cfg.sensitive_effect, sd = cfg.outcome_noise;
  m["Y"] = {{"A", "T", "X", "Z"}, 1, 1, {}, 0, normal_noise(1),
            [te, se, sd](const ParentValues& pv, const MatrixXd& u) {
              const auto& x = pv["X"];
              const Eigen::ArrayXd xbar = x.rowwise().mean().array();
              return MatrixXd((te * pv["T"].col(0).array() + se * pv["A"].col(0).array() + 0.5 * xbar +
                               0.3 * pv["Z"].col(0).array() + sd * u.col(0).array())
                                  .matrix());
            }};
  for (const auto& [node, inner] : cfg.overrides) {
    if (!g.has_node(node)) throw ContractError("fig2 has no node '" + node + "'");
    m[node] = widen(node, inner, g.parents(node));
  }
  return Scm(g, std::move(m));
}

std::vector<std::string> builtin_scm_names() { return {"appendix", "fig1c", "fig2-default", "linear-chain", "linear-fig1c"}; }

Scm builtin_scm(std::string_view name) {
  if (name == "appendix") return appendix_dgp();
  if (name == "fig1c") return fig1c_synthetic();
  if (name == "fig2-default") return semi_synthetic_fig2();
  if (name == "linear-chain") {
    graph::CausalGraph g;
    g.add_node("A", Role::Sensitive);
    g.add_node("X", Role::Covariate);
    g.add_node("Y", Role::Outcome);
    g.add_edge("A", "X");
    g.add_edge("X", "Y");
    g.add_edge("A", "Y");
    LinearGaussianSpec spec;
    spec.coefficients = {{{"A", "X"}, 2.0}, {{"X", "Y"}, 3.0}, {{"A", "Y"}, 1.0}};
    spec.slope_sd = 0.2;
    return linear_gaussian(g, spec);
  }
  if (name == "linear-fig1c") {
    graph::CausalGraph g = graph::builtin("fig1c");
    LinearGaussianSpec spec;
    spec.coefficients = {{{"Z", "X"}, 0.8}, {{"Z", "R"}, 0.5}, {{"Z", "Y"}, 0.7}, {{"B", "X"}, 0.4},
                         {{"B", "R"}, -0.3}, {{"B", "Y"}, 0.6}, {{"A", "X"}, 1.5}, {{"A", "R"}, 1.0},
                         {{"A", "Y"}, 0.5}, {{"X", "R"}, 0.9}, {{"X", "Y"}, 1.2}, {{"R", "Y"}, 2.0}};
    spec.slope_sd = 0.2;
    return linear_gaussian(g, spec);
  }
  std::string names;
  for (const auto& n : builtin_scm_names()) names += (names.empty() ? "" : ", ") + n;
  throw ContractError("unknown builtin scm '" + std::string(name) + "' (" + names + ")");
}

}  // namespace fairtrade::scm
