#include "fairtrade/audit.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>

namespace fairtrade::audit {

namespace {

std::string tail(const std::string& s, std::size_t n = 400) { return s.size() <= n ? s : "..." + s.substr(s.size() - n); }

std::optional<std::string> drop_warning(const std::string& model, double original, double reconstructed, double tol) {
  if (original - reconstructed <= tol) return std::nullopt;
  std::ostringstream w;
  w.precision(3);
  w << model << " accuracy drops from " << original << " to " << reconstructed
    << " on reconstructed data; the reconstruction is too poor to interpret the audit";
  return w.str();
}

VectorXd rounded(const VectorXd& p) { return p.unaryExpr([](double v) { return round_label(v); }); }

}  // namespace

VectorXd LogisticBox::predict(const Dataset& d) const {
  MatrixXd x = fairpred::columns_matrix(d, columns_);
  if (fixed_) x.col(fixed_->first).setConstant(fixed_->second);
  return fairpred::predict(model_, x);
}

VectorXd ForestBox::predict(const Dataset& d) const { return rf_.predict_proba(fairpred::columns_matrix(d, columns_)); }

ProcessResult run_process(const std::string& command, const std::string& input, double timeout_seconds) {
  int in[2], out[2], err[2];
  if (pipe(in) != 0 || pipe(out) != 0 || pipe(err) != 0) throw AdapterError("pipe: " + std::string(std::strerror(errno)));
  const pid_t pid = fork();
  if (pid < 0) throw AdapterError("fork: " + std::string(std::strerror(errno)));
  if (pid == 0) {
    dup2(in[0], STDIN_FILENO);
    dup2(out[1], STDOUT_FILENO);
    dup2(err[1], STDERR_FILENO);
    for (int fd : {in[0], in[1], out[0], out[1], err[0], err[1]}) close(fd);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in[0]);
  close(out[1]);
  close(err[1]);
  for (int fd : {in[1], out[0], err[0]}) fcntl(fd, F_SETFL, fcntl(fd, F_GETFL) | O_NONBLOCK);
  signal(SIGPIPE, SIG_IGN);

  ProcessResult r;
  std::size_t written = 0;
  int in_fd = in[1];
  if (input.empty()) {
    close(in_fd);
    in_fd = -1;
  }
  bool out_open = true, err_open = true;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  char buf[65536];
  while (out_open || err_open) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      r.timed_out = true;
      kill(pid, SIGKILL);
      break;
    }
    pollfd fds[3];
    int nfds = 0;
    if (out_open) fds[nfds++] = {out[0], POLLIN, 0};
    if (err_open) fds[nfds++] = {err[0], POLLIN, 0};
    if (in_fd >= 0) fds[nfds++] = {in_fd, POLLOUT, 0};
    const int ready = poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(std::min<long>(left.count(), 1000)));
    if (ready < 0 && errno != EINTR) break;
    for (int k = 0; k < nfds; ++k) {
      if (!fds[k].revents) continue;
      if (fds[k].fd == in_fd) {
        const ssize_t w = write(in_fd, input.data() + written, input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) written = input.size();
        if (written >= input.size()) {
          close(in_fd);
          in_fd = -1;
        }
        continue;
      }
      const ssize_t got = read(fds[k].fd, buf, sizeof buf);
      if (got > 0) {
        (fds[k].fd == out[0] ? r.out : r.err).append(buf, static_cast<std::size_t>(got));
      } else if (got == 0 || errno != EAGAIN) {
        (fds[k].fd == out[0] ? out_open : err_open) = false;
      }
    }
  }
  if (in_fd >= 0) close(in_fd);
  close(out[0]);
  close(err[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  r.exit_status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

VectorXd ExternalBox::predict(const Dataset& d) const {
  std::ostringstream csv;
  csv.precision(17);
  for (std::size_t j = 0; j < columns_.size(); ++j) csv << (j ? "," : "") << columns_[j];
  csv << "\n";
  const MatrixXd x = fairpred::columns_matrix(d, columns_);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) csv << (j ? "," : "") << x(i, j);
    csv << "\n";
  }
  const auto r = run_process(command_, csv.str(), timeout_);
  const std::string log = "; stdout: " + tail(r.out) + "; stderr: " + tail(r.err);
  if (r.timed_out) throw AdapterError("adapter '" + command_ + "' timed out" + log);
  if (r.exit_status != 0) throw AdapterError("adapter '" + command_ + "' exited with status " + std::to_string(r.exit_status) + log);
  VectorXd p(d.rows());
  std::istringstream lines(r.out);
  std::string line;
  Index k = 0;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (k >= d.rows()) throw AdapterError("adapter printed more than " + std::to_string(d.rows()) + " predictions" + log);
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || !(v >= 0.0 && v <= 1.0))
      throw AdapterError("adapter line " + std::to_string(k + 1) + " is not a probability: '" + line + "'" + log);
    p(k++) = v;
  }
  if (k != d.rows())
    throw AdapterError("adapter printed " + std::to_string(k) + " predictions for " + std::to_string(d.rows()) + " records" + log);
  return p;
}

std::shared_ptr<LogisticBox> train_lr(const Dataset& train, const std::vector<std::string>& columns,
                                      const fairpred::AuxConfig& cfg) {
  auto c = cfg;
  c.hidden_width = 0;
  auto model = fairpred::train_aux(fairpred::columns_matrix(train, columns), fairpred::outcome_labels(train), c);
  return std::make_shared<LogisticBox>("LR", columns, std::move(model));
}

std::shared_ptr<LogisticBox> train_lr_fixed_a(const Dataset& train, const std::vector<std::string>& columns,
                                              const std::string& sensitive_column, const fairpred::AuxConfig& cfg) {
  const auto it = std::find(columns.begin(), columns.end(), sensitive_column);
  if (it == columns.end()) throw ContractError("sensitive column '" + sensitive_column + "' is not a model input");
  const Index j = it - columns.begin();
  auto base = train_lr(train, columns, cfg);
  const double mean = train.values().col(train.column_index(sensitive_column)).mean();
  return std::make_shared<LogisticBox>("LR_fixed_a", columns, base->model(), std::make_pair(j, mean));
}

std::shared_ptr<ForestBox> train_rf(const Dataset& train, const std::vector<std::string>& columns,
                                    const forest::ForestConfig& cfg) {
  return std::make_shared<ForestBox>(
      columns, forest::RandomForest::fit(fairpred::columns_matrix(train, columns), fairpred::outcome_labels(train), cfg));
}

SanityResult sanity_check(const BlackBox& box, const Dataset& original, const Dataset& reconstructed,
                          const VectorXd& labels_original, const VectorXd& labels_reconstructed, double tolerance) {
  if (original.rows() != reconstructed.rows() || labels_original.size() != original.rows() ||
      labels_reconstructed.size() != reconstructed.rows())
    throw ContractError("sanity check needs equally sized sets and labels");
  SanityResult s;
  s.accuracy_original = fairpred::accuracy(box.predict(original), labels_original);
  s.accuracy_reconstructed = fairpred::accuracy(box.predict(reconstructed), rounded(labels_reconstructed));
  s.warning = drop_warning(box.name(), s.accuracy_original, s.accuracy_reconstructed, tolerance);
  return s;
}

namespace {

nlohmann::json summary_json(const fairpred::Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"values", s.values}}; }

}  // namespace

nlohmann::json to_json(const AuditReport& r) {
  nlohmann::json j = {{"version", 1},
                      {"model", r.model},
                      {"n", r.n},
                      {"reps", r.reps},
                      {"seed", r.seed},
                      {"decode_mode", r.decode_mode},
                      {"cf_score",
                       {{"mean_abs", summary_json(r.cf_mean_abs)},
                        {"flip_rate", summary_json(r.cf_flip_rate)},
                        {"mean_abs_rounded", summary_json(r.cf_mean_abs_rounded)}}},
                      {"statistical_parity_factual", summary_json(r.sp_factual)},
                      {"sanity",
                       {{"accuracy_original", r.accuracy_original},
                        {"accuracy_reconstructed", summary_json(r.accuracy_reconstructed)}}}};
  j["sanity"]["warning"] = r.warning ? nlohmann::json(*r.warning) : nlohmann::json(nullptr);
  return j;
}

AuditReport run_audit(const cevae::CevaeModel& m, const Dataset& test, const BlackBox& box, const AuditConfig& cfg) {
  if (cfg.reps < 1) throw ContractError("audit needs at least one repetition");
  const VectorXd labels = fairpred::outcome_labels(test);
  const std::string a_col = test.columns()[test.node_columns(m.sensitive()).at(0)].name;
  const VectorXd a = test.values().col(test.column_index(a_col));
  AuditReport rep;
  rep.model = box.name();
  rep.n = test.rows();
  rep.reps = cfg.reps;
  rep.seed = cfg.seed;
  rep.decode_mode = cevae::to_string(cfg.mode);
  rep.accuracy_original = fairpred::accuracy(box.predict(test), labels);
  std::vector<double> ma, fr, mr, sp, acc;
  for (Index r = 0; r < cfg.reps; ++r) {
    const std::uint64_t s = derive_seed(cfg.seed, "audit", static_cast<std::uint64_t>(r));
    const Dataset f = cevae::reconstruct(m, test, cfg.mode, s);
    const Dataset cf = cevae::counterfactual_reconstruct(m, test, cevae::APolicy::switched(), cfg.mode, s);
    const VectorXd pf = box.predict(f), pc = box.predict(cf);
    ma.push_back(metrics::cf_score(pf, pc, metrics::CfMode::MeanAbs));
    fr.push_back(metrics::cf_score(pf, pc, metrics::CfMode::FlipRate));
    mr.push_back(metrics::cf_score(rounded(pf), rounded(pc), metrics::CfMode::MeanAbs));
    sp.push_back(metrics::statistical_parity_score(pf, a));
    acc.push_back(fairpred::accuracy(pf, rounded(fairpred::outcome_labels(f))));
  }
  rep.cf_mean_abs = fairpred::summarize(ma);
  rep.cf_flip_rate = fairpred::summarize(fr);
  rep.cf_mean_abs_rounded = fairpred::summarize(mr);
  rep.sp_factual = fairpred::summarize(sp);
  rep.accuracy_reconstructed = fairpred::summarize(acc);
  rep.warning = drop_warning(box.name(), rep.accuracy_original, rep.accuracy_reconstructed.mean, kSanityTolerance);
  return rep;
}

}  // namespace fairtrade::audit
