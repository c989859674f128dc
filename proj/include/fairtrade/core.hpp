#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fairtrade {

using Index = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::RowVectorXd;

using Rng = std::mt19937_64;

/// Caller broke a documented precondition (bad dimensions, unknown names, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked in the wrong object state (e.g. backward before forward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input is well-formed but fails a domain check (cycles, non-identifiable path sets).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or infinity surfaced where a finite value is required.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, Index record = -1)
      : std::runtime_error(what), record_(record) {}
  Index record() const noexcept { return record_; }

 private:
  Index record_;
};

/// Derive an independent seed for a named substream of `master`.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index);

/// n x m matrix of standard normal draws.
MatrixXd standard_normal(Rng& rng, Index rows, Index cols);
/// n x m matrix of U(0,1) draws.
MatrixXd standard_uniform(Rng& rng, Index rows, Index cols);

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return (1.0 + (-x).exp()).inverse();
}

/// log(1 + exp(x)) without overflow.
template <typename Derived>
auto softplus(const Eigen::ArrayBase<Derived>& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Rounding convention shared by accuracy and fairness scores: ties go to class 1.
inline double round_label(double p) { return p >= 0.5 ? 1.0 : 0.0; }

}  // namespace fairtrade
