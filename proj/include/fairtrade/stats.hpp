#pragma once

#include "fairtrade/core.hpp"

#include <span>
#include <vector>

namespace fairtrade::stats {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Hartigan's dip statistic of a sample (unsorted input is fine).
double dip_statistic(std::span<const double> sample);

/// Upper `1 - alpha` quantile of the dip under the uniform null for sample size n,
/// estimated from `replicates` seeded simulations.
double dip_critical_value(Index n, double alpha, std::uint64_t seed, int replicates = 200);

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);

inline std::span<const double> as_span(const VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace fairtrade::stats
