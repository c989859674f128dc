// fairtrade: command-line pipeline for synthetic data, CEVAE training,
// path-specific fair predictors and black-box audits.
//
// Exit status: 0 success, 2 invalid input or failed validation, 3 numerical abort,
// 1 anything else.

#include "json_config.hpp"

#include "fairtrade/audit.hpp"
#include "fairtrade/cevae.hpp"
#include "fairtrade/fairpred.hpp"
#include "fairtrade/forest.hpp"
#include "fairtrade/graph.hpp"
#include "fairtrade/metrics.hpp"
#include "fairtrade/scm.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fairtrade;
using nlohmann::json;

namespace {

struct GenDataOpts {
  std::string dgp = "appendix";
  Index n = 10000;
  std::string name = "data";
  std::vector<std::string> params;
  bool with_noise = false;
  double split = 0.0;
  std::string out = "out";
};

struct TrainCevaeOpts {
  std::string data, schema, graph;
  cevae::TrainConfig train;
  Index log_every = 10;
  std::string out = "out";
};

struct AuxOpts {
  std::string checkpoint, data, schema, predict, predict_schema;
  std::string selection = "Z,B,R*";
  std::optional<double> base_a;
  fairpred::AuxConfig aux;
  std::string out = "out";
};

struct SweepOpts {
  std::string checkpoint, data, schema;
  std::vector<std::string> selections;
  std::optional<double> base_a;
  fairpred::AuxConfig aux;
  Index reps = 20;
  double test_fraction = 0.1;
  std::string out = "out";
};

struct EvalOpts {
  std::string data, schema, checkpoint, aux_model, dgp, paths;
  std::vector<std::string> metrics{"baselines"};
  fairpred::AuxConfig aux;
  Index reps = 20;
  double test_fraction = 0.1;
  Index oracle_n = 10000;
  std::string out = "out";
};

struct PseOpts {
  std::string dgp = "linear-fig1c";
  std::string paths;
  double active = 1.0, base = 0.0;
  Index n = 100000;
  std::string out = "out";
};

struct IdentOpts {
  std::string graph = "fig1c";
  std::string paths;
  std::string out = "out";
};

struct AuditOpts {
  std::string checkpoint, data, schema, train, train_schema;
  std::string adapter = "lr";
  std::vector<std::string> columns;
  Index reps = 20;
  std::string mode = "sample";
  double timeout = 60.0;
  fairpred::AuxConfig aux;
  forest::ForestConfig rf;
  std::string out = "out/report.json";
};

/// Every option the CLI binds, grouped by subcommand.
struct PipelineConfig {
  std::uint64_t seed = 0;
  GenDataOpts gen;
  TrainCevaeOpts train;
  AuxOpts aux;
  SweepOpts sweep;
  EvalOpts eval;
  PseOpts pse;
  IdentOpts ident;
  AuditOpts audit;
};

// ------------------------------------------------------------------ helpers

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ContractError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(p.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ContractError("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ContractError("cannot write " + p.string());
  out << std::setprecision(10);
  return out;
}

Dataset load_data(const std::string& csv, const std::string& schema) {
  if (csv.empty()) throw ContractError("a dataset CSV is required");
  return read_dataset(csv, schema.empty() ? default_schema_path(csv) : fs::path(schema));
}

graph::CausalGraph load_graph(const std::string& spec) {
  if (spec.empty()) throw ContractError("a graph is required (builtin name or JSON file)");
  if (fs::path(spec).extension() == ".json") return graph::graph_from_json(read_json(spec));
  return graph::builtin(spec);
}

cevae::CevaeModel load_model(const std::string& path) {
  if (path.empty()) throw ContractError("a CEVAE checkpoint is required");
  return cevae::CevaeModel::from_checkpoint(read_json(path));
}

json summary_json(const fairpred::Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"values", s.values}}; }

std::map<std::string, double> parse_params(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& it : items) {
    const auto eq = it.find('=');
    if (eq == std::string::npos) throw ContractError("parameter '" + it + "' must look like key=value");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(it.substr(eq + 1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != it.size() - eq - 1) throw ContractError("parameter '" + it + "' has a non-numeric value");
    out[it.substr(0, eq)] = v;
  }
  return out;
}

template <class P>
void apply_params(P& target, std::map<std::string, double> params, const std::map<std::string, double P::*>& fields,
                  const std::string& dgp) {
  for (const auto& [k, v] : params) {
    const auto f = fields.find(k);
    if (f == fields.end()) {
      std::string names;
      for (const auto& [n, unused] : fields) names += (names.empty() ? "" : ", ") + n;
      throw ContractError("unknown parameter '" + k + "' for " + dgp + " (" + names + ")");
    }
    target.*(f->second) = v;
  }
}

scm::Scm make_scm(const std::string& dgp, const std::vector<std::string>& param_items) {
  const auto params = parse_params(param_items);
  if (dgp == "appendix") {
    scm::AppendixDgpParams p;
    using P = scm::AppendixDgpParams;
    apply_params(p, params,
                 {{"a_x", &P::a_x}, {"b_x", &P::b_x}, {"c_x", &P::c_x}, {"p_a", &P::p_a}, {"mu_z", &P::mu_z},
                  {"sigma_z", &P::sigma_z}, {"gamma_x", &P::gamma_x}, {"gamma_y", &P::gamma_y},
                  {"theta_a", &P::theta_a}, {"theta_x", &P::theta_x}, {"theta_z", &P::theta_z}},
                 dgp);
    return scm::appendix_dgp(p);
  }
  if (dgp == "fig1c") {
    scm::Fig1cParams p;
    using P = scm::Fig1cParams;
    apply_params(p, params,
                 {{"a_to_x", &P::a_to_x}, {"a_to_r", &P::a_to_r}, {"a_to_y", &P::a_to_y}, {"x_noise", &P::x_noise},
                  {"y_scale", &P::y_scale}},
                 dgp);
    return scm::fig1c_synthetic(p);
  }
  if (dgp == "fig2-default" && !params.empty()) {
    scm::Fig2Config c;
    for (const auto& [k, v] : params) {
      if (k == "covariates") {
        if (v < 1 || v != std::floor(v)) throw ContractError("covariates must be a positive integer");
        c.covariates = static_cast<Index>(v);
      } else if (k == "treatment_effect") {
        c.treatment_effect = v;
      } else if (k == "sensitive_effect") {
        c.sensitive_effect = v;
      } else if (k == "outcome_noise") {
        c.outcome_noise = v;
      } else {
        throw ContractError("unknown parameter '" + k +
                            "' for fig2-default (covariates, treatment_effect, sensitive_effect, outcome_noise)");
      }
    }
    return scm::semi_synthetic_fig2(c);
  }
  if (!params.empty()) throw ContractError(dgp + " takes no parameters");
  return scm::builtin_scm(dgp);
}

/// Aux model file: the network plus the input selection it was trained on.
json aux_file(const fairpred::AuxModel& m, const fairpred::InputSelection& sel) {
  json j = {{"version", 1}, {"kind", "aux-predictor"}, {"selection", sel.to_string()}, {"model", fairpred::to_json(m)}};
  j["base_a"] = sel.base_a ? json(*sel.base_a) : json(nullptr);
  return j;
}

std::pair<fairpred::AuxModel, fairpred::InputSelection> load_aux(const std::string& path) {
  if (path.empty()) throw ContractError("an aux model file is required");
  const json j = read_json(path);
  if (j.value("kind", "") != "aux-predictor") throw ValidationError(path + " is not an aux predictor file");
  std::optional<double> base;
  if (!j.at("base_a").is_null()) base = j.at("base_a").get<double>();
  return {fairpred::aux_model_from_json(j.at("model")),
          fairpred::InputSelection::parse(j.at("selection").get<std::string>(), base)};
}

void write_predictions(const fs::path& p, const VectorXd& prob) {
  auto out = open_out(p);
  out << "record_id,y_hat\n";
  for (Index i = 0; i < prob.size(); ++i) out << i << "," << prob(i) << "\n";
}

// ------------------------------------------------------------- subcommands

void run_gen_data(const PipelineConfig& c) {
  const auto& o = c.gen;
  if (o.n < 1) throw ContractError("n must be positive");
  if (!(o.split >= 0.0 && o.split < 1.0)) throw ContractError("split must lie in [0,1)");
  const auto model = make_scm(o.dgp, o.params);
  const Dataset d = scm::sample_dataset(model, o.n, derive_seed(c.seed, "gen-data"));
  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_dataset(d, dir / (o.name + ".csv"), default_schema_path(dir / (o.name + ".csv")), o.with_noise);
  write_json(dir / (o.name + ".graph.json"), graph::to_json(model.graph()));
  if (o.split > 0.0) {
    const auto [train, test] = train_test_split(d, o.split, derive_seed(c.seed, "split"));
    write_dataset(train, dir / (o.name + "_train.csv"), default_schema_path(dir / (o.name + "_train.csv")),
                  o.with_noise);
    write_dataset(test, dir / (o.name + "_test.csv"), default_schema_path(dir / (o.name + "_test.csv")),
                  o.with_noise);
  }
  std::cout << "wrote " << d.rows() << " records to " << (dir / (o.name + ".csv")).string() << "\n";
}

/// Posterior means per record with the sensitive value, for embedding plots.
void write_latent(const cevae::CevaeModel& m, const Dataset& d, const fs::path& p) {
  const auto post = m.infer(d);
  const VectorXd a = d.node_block(m.sensitive()).col(0);
  auto out = open_out(p);
  out << "record_id," << m.sensitive();
  for (Index k = 0; k < post.mean.cols(); ++k) out << ",z" << k;
  out << "\n";
  for (Index i = 0; i < post.mean.rows(); ++i) {
    out << i << "," << a(i);
    for (Index k = 0; k < post.mean.cols(); ++k) out << "," << post.mean(i, k);
    out << "\n";
  }
}

/// Column means of the observed data and of mean-mode decodings under set(0) and set(1).
void write_decoded_means(const cevae::CevaeModel& m, const Dataset& d, const fs::path& p, std::uint64_t seed) {
  const Dataset r0 = cevae::counterfactual_reconstruct(m, d, cevae::APolicy::set(0.0), cevae::DecodeMode::Mean, seed);
  const Dataset r1 = cevae::counterfactual_reconstruct(m, d, cevae::APolicy::set(1.0), cevae::DecodeMode::Mean, seed);
  const auto modeled = m.modeled_nodes();
  auto out = open_out(p);
  out << "column,observed,decoded_set_a0,decoded_set_a1\n";
  for (const auto& col : m.profile()) {
    if (std::find(modeled.begin(), modeled.end(), col.node) == modeled.end()) continue;
    out << "\"" << col.name << "\"," << d.values().col(d.column_index(col.name)).mean() << ","
        << r0.values().col(r0.column_index(col.name)).mean() << "," << r1.values().col(r1.column_index(col.name)).mean()
        << "\n";
  }
}

void run_train_cevae(const PipelineConfig& c) {
  const auto& o = c.train;
  const Dataset d = load_data(o.data, o.schema);
  auto cfg = o.train;
  cfg.seed = c.seed;
  auto model = cevae::CevaeModel::for_dataset(load_graph(o.graph), d, cfg);
  const fs::path dir = o.out;
  fs::create_directories(dir);

  std::vector<double> gaps;
  std::vector<cevae::ElboTerms> log;
  const auto hook = [&](Index epoch, const cevae::ElboTerms& t, const cevae::CevaeModel& m) {
    log.push_back(t);
    gaps.push_back(metrics::latent_gap(m, d).max);
    if (o.log_every > 0 && (epoch % o.log_every == 0 || epoch == 1))
      std::cerr << "epoch " << epoch << " elbo " << t.total << " reg " << t.reg << " latent_gap " << gaps.back()
                << "\n";
  };
  try {
    cevae::train(model, d, hook);
  } catch (const NumericalError&) {
    // the model holds the last completed epoch; keep it and its log for inspection
    write_json(dir / "cevae.partial.json", model.checkpoint());
    cevae::write_epoch_log(log, dir / "epochs.csv", gaps);
    throw;
  }
  write_json(dir / "cevae.json", model.checkpoint());
  cevae::write_epoch_log(log, dir / "epochs.csv", gaps);
  write_latent(model, d, dir / "latent.csv");
  write_decoded_means(model, d, dir / "decoded_means.csv", derive_seed(c.seed, "decode-means"));
  std::cout << "trained " << log.size() << " epochs; final elbo " << (log.empty() ? 0.0 : log.back().total) << "\n";
}

fairpred::InputSelection parse_selection(const std::string& text, std::optional<double> base_a,
                                         const cevae::CevaeModel& m) {
  auto sel = fairpred::InputSelection::parse(text, base_a);
  sel.validate(m.graph());
  return sel;
}

void run_train_aux(const PipelineConfig& c) {
  const auto& o = c.aux;
  const auto m = load_model(o.checkpoint);
  const auto sel = parse_selection(o.selection, o.base_a, m);
  const Dataset d = load_data(o.data, o.schema);
  auto cfg = o.aux;
  cfg.seed = c.seed;
  fairpred::FeatureOptions fo;
  fo.seed = derive_seed(c.seed, "features");
  const auto aux = fairpred::train_aux(fairpred::build_inputs(m, d, sel, fo), fairpred::outcome_labels(d), cfg);
  for (const auto& w : aux.warnings) std::cerr << "warning: " << w << "\n";

  const fs::path dir = o.out;
  write_json(dir / "aux.json", aux_file(aux, sel));
  {
    auto out = open_out(dir / "aux_loss.csv");
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < aux.loss_curve.size(); ++i) out << i + 1 << "," << aux.loss_curve[i] << "\n";
  }
  if (!o.predict.empty()) {
    const Dataset t = load_data(o.predict, o.predict_schema);
    const VectorXd p = fairpred::predict(aux, fairpred::build_inputs(m, t, sel, fo));
    write_predictions(dir / "predictions.csv", p);
    std::cout << "accuracy on " << o.predict << ": " << fairpred::accuracy(p, fairpred::outcome_labels(t)) << "\n";
  }
  std::cout << "trained aux model on " << sel.to_string() << "\n";
}

void run_sweep(const PipelineConfig& c) {
  const auto& o = c.sweep;
  const auto m = load_model(o.checkpoint);
  const Dataset d = load_data(o.data, o.schema);
  std::vector<fairpred::InputSelection> sels;
  if (o.selections.empty()) {
    if (!o.base_a) throw ContractError("--base-a is required for the default sweep, which includes R*");
    sels = fairpred::default_sweep(*o.base_a);
  } else {
    for (const auto& s : o.selections) sels.push_back(parse_selection(s, o.base_a, m));
  }
  auto cfg = o.aux;
  cfg.seed = c.seed;
  const auto rows = fairpred::sweep(m, d, sels, cfg, o.reps, o.test_fraction);

  const fs::path dir = o.out;
  auto table = open_out(dir / "sweep.csv");
  auto points = open_out(dir / "sweep_points.csv");
  table << "selection,accuracy_mean,accuracy_std,sp_mean,sp_std\n";
  points << "selection,rep,accuracy,sp\n";
  for (const auto& r : rows) {
    const std::string name = "\"" + r.selection.to_string() + "\"";
    table << name << "," << r.accuracy.mean << "," << r.accuracy.std << "," << r.sp_score.mean << "," << r.sp_score.std
          << "\n";
    for (std::size_t k = 0; k < r.accuracy.values.size(); ++k)
      points << name << "," << k << "," << r.accuracy.values[k] << "," << r.sp_score.values[k] << "\n";
    std::cout << std::left << std::setw(14) << r.selection.to_string() << " acc " << std::fixed << std::setprecision(3)
              << r.accuracy.mean << " +- " << r.accuracy.std << "  sp " << r.sp_score.mean << " +- " << r.sp_score.std
              << "\n"
              << std::defaultfloat;
  }
}

void run_eval(const PipelineConfig& c) {
  const auto& o = c.eval;
  const Dataset d = load_data(o.data, o.schema);
  json doc = {{"data", o.data}, {"seed", c.seed}, {"metrics", json::array()}};
  std::optional<cevae::CevaeModel> m;
  std::optional<std::pair<fairpred::AuxModel, fairpred::InputSelection>> aux;
  const auto need_model = [&]() -> const cevae::CevaeModel& {
    if (!m) m = load_model(o.checkpoint);
    return *m;
  };
  const auto need_aux = [&]() -> const std::pair<fairpred::AuxModel, fairpred::InputSelection>& {
    if (!aux) aux = load_aux(o.aux_model);
    return *aux;
  };

  for (const auto& metric : o.metrics) {
    if (metric == "baselines") {
      auto cfg = o.aux;
      cfg.seed = c.seed;
      const auto t = fairpred::baselines(d, cfg, o.reps, o.test_fraction);
      doc["baselines"] = {{"mlp", summary_json(t.mlp)}, {"lr", summary_json(t.lr)}};
      std::cout << "baseline accuracy: MLP " << t.mlp.mean << " +- " << t.mlp.std << ", LR " << t.lr.mean << " +- "
                << t.lr.std << "\n";
    } else if (metric == "latent_gap") {
      const auto g = metrics::latent_gap(need_model(), d);
      doc["latent_gap"] = {{"per_dim", std::vector<double>(g.per_dim.data(), g.per_dim.data() + g.per_dim.size())},
                           {"max", g.max}};
      std::cout << "latent gap: " << g.max << "\n";
    } else if (metric == "accuracy" || metric == "statistical_parity") {
      const auto& [model, sel] = need_aux();
      fairpred::FeatureOptions fo;
      fo.seed = derive_seed(c.seed, "features");
      const VectorXd p = fairpred::predict(model, fairpred::build_inputs(need_model(), d, sel, fo));
      metrics::MetricReport r;
      r.metric = metric;
      r.n = d.rows();
      r.seed = c.seed;
      if (metric == "accuracy") {
        r.value = fairpred::accuracy(p, fairpred::outcome_labels(d));
        r.stderr_ = std::sqrt(r.value * (1.0 - r.value) / static_cast<double>(r.n));
      } else {
        const VectorXd a = d.node_block(d.columns()[d.role_columns(graph::Role::Sensitive).at(0)].node).col(0);
        r.value = metrics::statistical_parity_score(p, a);
      }
      doc["metrics"].push_back(metrics::to_json(r));
      std::cout << metric << ": " << r.value << "\n";
    } else if (metric == "oracle_cf" || metric == "oracle_pscf") {
      if (o.dgp.empty()) throw ContractError(metric + " needs --dgp naming the generating process");
      const auto& [model, sel] = need_aux();
      const auto truth = scm::builtin_scm(o.dgp);
      const auto pred = fairpred::oracle_predictor(need_model(), model, sel);
      const auto r = metric == "oracle_cf"
                         ? metrics::oracle_cf(pred, truth, o.oracle_n, c.seed)
                         : metrics::oracle_pscf(pred, truth, graph::parse_path_set(o.paths), o.oracle_n, c.seed);
      doc["metrics"].push_back(metrics::to_json(r));
      std::cout << metric << ": " << r.value << " (stderr " << r.stderr_ << ")\n";
    } else {
      throw ContractError("unknown metric '" + metric +
                          "' (baselines, latent_gap, accuracy, statistical_parity, oracle_cf, oracle_pscf)");
    }
  }
  write_json(fs::path(o.out) / "eval.json", doc);
}

void run_pse(const PipelineConfig& c) {
  const auto& o = c.pse;
  const auto truth = scm::builtin_scm(o.dgp);
  scm::NestedCounterfactual nc{graph::parse_path_set(o.paths), o.active, o.base};
  const auto est = scm::pse(truth, nc, o.n, c.seed);
  json paths = json::array();
  for (const auto& p : nc.paths) paths.push_back(graph::to_string(p));
  const json doc = {{"dgp", o.dgp},      {"paths", paths},          {"active", o.active}, {"base", o.base},
                    {"value", est.value}, {"stderr", est.std_error}, {"n", est.n},         {"seed", c.seed}};
  write_json(fs::path(o.out) / "pse.json", doc);
  std::cout << "pse " << est.value << " (stderr " << est.std_error << ")\n";
}

void run_identifiability(const PipelineConfig& c) {
  const auto& o = c.ident;
  const auto g = load_graph(o.graph);
  const auto paths = graph::parse_path_set(o.paths);
  const auto all = graph::enumerate_paths(g);
  for (const auto& p : paths)
    if (std::find(all.begin(), all.end(), p) == all.end())
      throw ContractError("'" + graph::to_string(p) + "' is not a path from the sensitive node to the outcome");
  const auto id = graph::check_identifiability(g, paths);
  json doc = {{"identifiable", id.identifiable}};
  doc["witness"] = id.witness ? json(*id.witness) : json(nullptr);
  doc["active_path"] = id.identifiable ? json(nullptr) : json(graph::to_string(id.active_path));
  doc["inactive_path"] = id.identifiable ? json(nullptr) : json(graph::to_string(id.inactive_path));
  write_json(fs::path(o.out) / "identifiability.json", doc);
  std::cout << doc.dump() << "\n";
}

std::shared_ptr<audit::BlackBox> make_box(const AuditOpts& o, const Dataset& test, std::uint64_t seed) {
  std::vector<std::string> cols = o.columns.empty() ? fairpred::raw_feature_columns(test) : o.columns;
  const std::string a_col = test.columns()[test.role_columns(graph::Role::Sensitive).at(0)].name;
  if (o.adapter.rfind("cmd:", 0) == 0) {
    const std::string cmd = o.adapter.substr(4);
    if (cmd.empty()) throw ContractError("adapter cmd: needs a command");
    return std::make_shared<audit::ExternalBox>(cmd, cols, o.timeout);
  }
  const Dataset train = load_data(o.train, o.train_schema);
  auto aux = o.aux;
  aux.seed = derive_seed(seed, "black-box");
  if (o.adapter == "lr") return audit::train_lr(train, cols, aux);
  if (o.adapter == "lr_fixed_a") return audit::train_lr_fixed_a(train, cols, a_col, aux);
  if (o.adapter == "rf") {
    auto rf = o.rf;
    rf.seed = derive_seed(seed, "black-box");
    return audit::train_rf(train, cols, rf);
  }
  throw ContractError("unknown adapter '" + o.adapter + "' (lr, lr_fixed_a, rf, cmd:<command>)");
}

void run_audit(const PipelineConfig& c) {
  const auto& o = c.audit;
  const auto m = load_model(o.checkpoint);
  const Dataset test = load_data(o.data, o.schema);
  const auto box = make_box(o, test, c.seed);
  audit::AuditConfig cfg;
  cfg.reps = o.reps;
  cfg.mode = cevae::decode_mode_from_string(o.mode);
  cfg.seed = c.seed;
  const auto report = audit::run_audit(m, test, *box, cfg);
  write_json(o.out, audit::to_json(report));
  std::cout << report.model << ": cf_score " << report.cf_mean_abs.mean << " +- " << report.cf_mean_abs.std
            << " (flip_rate " << report.cf_flip_rate.mean << "), factual sp " << report.sp_factual.mean << "\n";
  if (report.warning) std::cerr << "warning: " << *report.warning << "\n";
}

// ------------------------------------------------------------- option wiring

void add_aux_options(CLI::App* s, fairpred::AuxConfig& a) {
  s->add_option("--aux-hidden", a.hidden_width, "Aux hidden width (0 gives logistic regression)")
      ->check(CLI::NonNegativeNumber);
  s->add_option("--aux-lr", a.learning_rate, "Aux RMSprop learning rate")->check(CLI::PositiveNumber);
  s->add_option("--aux-epochs", a.epochs, "Aux training epochs")->check(CLI::PositiveNumber);
  s->add_option("--aux-batch", a.batch_size, "Aux mini-batch size")->check(CLI::PositiveNumber);
}

void add_data_options(CLI::App* s, std::string& data, std::string& schema, bool required = true) {
  auto* opt = s->add_option("--data", data, "Records CSV")->check(CLI::ExistingFile);
  if (required) opt->required();
  s->add_option("--schema", schema, "Schema JSON (default: sidecar of the CSV)")->check(CLI::ExistingFile);
}

std::string toml_value(const std::string& v) {
  if (v == "true" || v == "false") return v;
  char* end = nullptr;
  std::strtod(v.c_str(), &end);
  if (!v.empty() && end == v.c_str() + v.size() && v.find_first_of("xXnN") == std::string::npos) return v;
  return json(v).dump();
}

void write_toml_options(std::ostream& out, const CLI::App& app) {
  for (const CLI::Option* opt : app.get_options({})) {
    if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames()[0];
    if (opt->get_type_size() == 0) {
      out << name << "=" << (opt->count() ? "true" : "false") << "\n";
      continue;
    }
    std::vector<std::string> vals = opt->count() ? opt->reduced_results() : std::vector<std::string>{};
    if (!opt->count() && !opt->get_default_str().empty()) vals.push_back(opt->get_default_str());
    if (vals.empty() || (vals.size() == 1 && vals[0].empty())) continue;
    if (opt->get_items_expected_max() > 1) {
      out << name << "=[";
      for (std::size_t k = 0; k < vals.size(); ++k) out << (k ? "," : "") << json(vals[k]).dump();
      out << "]\n";
    } else {
      out << name << "=" << toml_value(vals[0]) << "\n";
    }
  }
}

/// The global options and the executed subcommand with every default filled in, as TOML and JSON;
/// either file reproduces the run through --config.
void write_resolved(const CLI::App& app, const CLI::App& sub, const fs::path& dir) {
  std::ofstream toml(dir / (sub.get_name() + ".resolved.toml"));
  write_toml_options(toml, app);
  toml << "[" << sub.get_name() << "]\n";
  write_toml_options(toml, sub);
  std::ofstream(dir / (sub.get_name() + ".resolved.json")) << cli::JsonConfig().to_config(&app, true, false, "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Path-specific counterfactual fairness with a causal-effect VAE"};
  app.option_defaults()->always_capture_default();
  app.config_formatter(std::make_shared<cli::AutoConfig>());
  app.set_config("--config", "", "TOML or JSON configuration file");
  app.require_subcommand(1);
  app.fallthrough();

  PipelineConfig c;
  app.add_option("--seed", c.seed, "Master seed; every random stream derives from it");

  auto* gen = app.add_subcommand("gen-data", "Sample records from a builtin generating process");
  gen->add_option("--dgp", c.gen.dgp, "Generating process")->check(CLI::IsMember(scm::builtin_scm_names()));
  gen->add_option("--n", c.gen.n, "Number of records")->check(CLI::PositiveNumber);
  gen->add_option("--name", c.gen.name, "Output file stem");
  gen->add_option("--param", c.gen.params, "Process parameter override key=value (repeatable)")->default_str("");
  gen->add_flag("--with-noise", c.gen.with_noise, "Also write the exogenous noise columns");
  gen->add_option("--split", c.gen.split, "Also write a train/test split with this test fraction");
  gen->add_option("--out", c.gen.out, "Output directory");

  auto* tc = app.add_subcommand("train-cevae", "Train the CEVAE on a dataset");
  add_data_options(tc, c.train.data, c.train.schema);
  tc->add_option("--graph", c.train.graph, "Builtin graph name or graph JSON file")->required();
  tc->add_option("--lr", c.train.train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  tc->add_option("--batch", c.train.train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  tc->add_option("--mc", c.train.train.n_mc_samples, "Monte-Carlo samples per record")->check(CLI::PositiveNumber);
  tc->add_option("--epochs", c.train.train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  tc->add_option("--latent-dim", c.train.train.latent_dim, "Latent dimension")->check(CLI::PositiveNumber);
  tc->add_option("--hidden", c.train.train.hidden_width, "Hidden width of all networks")->check(CLI::PositiveNumber);
  tc->add_option("--log-every", c.train.log_every, "Progress line every N epochs (0: silent)")
      ->check(CLI::NonNegativeNumber);
  tc->add_option("--out", c.train.out, "Output directory");

  auto* ta = app.add_subcommand("train-aux", "Train a predictor on a feature selection");
  ta->add_option("--checkpoint", c.aux.checkpoint, "CEVAE checkpoint")->required()->check(CLI::ExistingFile);
  add_data_options(ta, c.aux.data, c.aux.schema);
  ta->add_option("--selection", c.aux.selection, "Inputs, e.g. Z,B,R*");
  ta->add_option("--base-a", c.aux.base_a, "Baseline sensitive value for R* (required with R*)")
      ->run_callback_for_default(false);
  ta->add_option("--predict", c.aux.predict, "Also write predictions for this CSV")->check(CLI::ExistingFile);
  ta->add_option("--predict-schema", c.aux.predict_schema, "Schema of the prediction CSV")->check(CLI::ExistingFile);
  add_aux_options(ta, c.aux.aux);
  ta->add_option("--out", c.aux.out, "Output directory");

  auto* sw = app.add_subcommand("sweep", "Accuracy and statistical parity across feature selections");
  sw->add_option("--checkpoint", c.sweep.checkpoint, "CEVAE checkpoint")->required()->check(CLI::ExistingFile);
  add_data_options(sw, c.sweep.data, c.sweep.schema);
  sw->add_option("--selection", c.sweep.selections, "Selection to evaluate (repeatable, ';' separated)")
      ->delimiter(';')
      ->default_str("");
  sw->add_option("--base-a", c.sweep.base_a, "Baseline sensitive value for R*")->run_callback_for_default(false);
  sw->add_option("--reps", c.sweep.reps, "Repetitions (random splits)")->check(CLI::PositiveNumber);
  sw->add_option("--test-fraction", c.sweep.test_fraction, "Held-out fraction")->check(CLI::Range(0.0, 1.0));
  add_aux_options(sw, c.sweep.aux);
  sw->add_option("--out", c.sweep.out, "Output directory");

  auto* ev = app.add_subcommand("eval", "Baselines, latent gap, fairness and oracle metrics");
  add_data_options(ev, c.eval.data, c.eval.schema);
  ev->add_option("--metrics", c.eval.metrics,
                 "baselines, latent_gap, accuracy, statistical_parity, oracle_cf, oracle_pscf")
      ->delimiter(',')
      ->default_str("baselines");
  ev->add_option("--checkpoint", c.eval.checkpoint, "CEVAE checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--aux-model", c.eval.aux_model, "Aux predictor file from train-aux")->check(CLI::ExistingFile);
  ev->add_option("--dgp", c.eval.dgp, "Generating process for oracle metrics")
      ->check(CLI::IsMember(scm::builtin_scm_names()));
  ev->add_option("--paths", c.eval.paths, "Active paths for oracle_pscf, e.g. A>R>Y,A>Y");
  ev->add_option("--reps", c.eval.reps, "Repetitions for baselines")->check(CLI::PositiveNumber);
  ev->add_option("--test-fraction", c.eval.test_fraction, "Held-out fraction for baselines")
      ->check(CLI::Range(0.0, 1.0));
  ev->add_option("--oracle-n", c.eval.oracle_n, "Records drawn for oracle metrics")->check(CLI::PositiveNumber);
  add_aux_options(ev, c.eval.aux);
  ev->add_option("--out", c.eval.out, "Output directory");

  auto* ps = app.add_subcommand("pse", "Path-specific effect on a builtin process");
  ps->add_option("--dgp", c.pse.dgp, "Generating process")->check(CLI::IsMember(scm::builtin_scm_names()));
  ps->add_option("--paths", c.pse.paths, "Active paths, e.g. A>R>Y")->required();
  ps->add_option("--active", c.pse.active, "Sensitive value along the active paths");
  ps->add_option("--base", c.pse.base, "Sensitive value along all other paths");
  ps->add_option("--n", c.pse.n, "Monte-Carlo records")->check(CLI::PositiveNumber);
  ps->add_option("--out", c.pse.out, "Output directory");

  auto* id = app.add_subcommand("identifiability", "Recanting-witness check for a path set");
  id->add_option("--graph", c.ident.graph, "Builtin graph name or graph JSON file");
  id->add_option("--paths", c.ident.paths, "Active paths, e.g. A>X>Y")->required();
  id->add_option("--out", c.ident.out, "Output directory");

  auto* au = app.add_subcommand("audit", "Counterfactual audit of a black-box predictor");
  au->add_option("--checkpoint", c.audit.checkpoint, "CEVAE checkpoint")->required()->check(CLI::ExistingFile);
  add_data_options(au, c.audit.data, c.audit.schema);
  au->add_option("--adapter", c.audit.adapter, "lr, lr_fixed_a, rf or cmd:<command>");
  au->add_option("--train", c.audit.train, "Training CSV for builtin adapters")->check(CLI::ExistingFile);
  au->add_option("--train-schema", c.audit.train_schema, "Schema of the training CSV")->check(CLI::ExistingFile);
  au->add_option("--columns", c.audit.columns, "Model input columns (default: observed features)")
      ->delimiter(',')
      ->default_str("");
  au->add_option("--reps", c.audit.reps, "Reconstruction draws")->check(CLI::PositiveNumber);
  au->add_option("--decode-mode", c.audit.mode, "Reconstruction decoding")->check(CLI::IsMember({"mean", "sample"}));
  au->add_option("--timeout", c.audit.timeout, "Seconds allowed per external call")->check(CLI::PositiveNumber);
  au->add_option("--trees", c.audit.rf.n_trees, "Random forest size")->check(CLI::PositiveNumber);
  au->add_option("--max-depth", c.audit.rf.max_depth, "Random forest depth")->check(CLI::PositiveNumber);
  add_aux_options(au, c.audit.aux);
  au->add_option("--out", c.audit.out, "Report JSON path");

  for (auto* s : {gen, tc, ta, sw, ev, ps, id, au}) s->configurable();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::map<CLI::App*, std::pair<std::function<void(const PipelineConfig&)>, fs::path>> runs = {
      {gen, {run_gen_data, c.gen.out}},
      {tc, {run_train_cevae, c.train.out}},
      {ta, {run_train_aux, c.aux.out}},
      {sw, {run_sweep, c.sweep.out}},
      {ev, {run_eval, c.eval.out}},
      {ps, {run_pse, c.pse.out}},
      {id, {run_identifiability, c.ident.out}},
      {au, {run_audit, fs::path(c.audit.out).parent_path()}},
  };
  try {
    for (const auto& [sub, run] : runs) {
      if (!sub->parsed()) continue;
      const fs::path dir = run.second.empty() ? fs::path(".") : run.second;
      fs::create_directories(dir);
      write_resolved(app, *sub, dir);
      run.first(c);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what();
    if (e.record() >= 0) std::cerr << " (record " << e.record() << ")";
    std::cerr << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const audit::AdapterError& e) {
    std::cerr << "adapter error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
