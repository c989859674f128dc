#include <doctest.h>

#include "fairtrade/stats.hpp"

#include <vector>

using namespace fairtrade;
using namespace fairtrade::stats;

// Reference values below were computed with the Python `diptest` and `scipy` packages.

TEST_CASE("dip statistic matches reference implementation") {
  CHECK(dip_statistic(std::vector<double>{1, 2, 3, 4, 10, 11, 12, 13}) == doctest::Approx(0.16666666666666669).epsilon(1e-12));
  CHECK(dip_statistic(std::vector<double>{0.1, 0.5, 0.55, 0.9, 1.3, 2.0, 2.05, 2.1, 4.0, 4.2, 4.25}) ==
        doctest::Approx(0.12050739957716701).epsilon(1e-12));
  std::vector<double> grid;
  for (int i = 0; i < 20; ++i) grid.push_back(i / 19.0);
  CHECK(dip_statistic(grid) == doctest::Approx(0.025).epsilon(1e-12));
}

TEST_CASE("dip is order invariant") {
  std::vector<double> a{4, 1, 13, 2, 11, 3, 12, 10};
  CHECK(dip_statistic(a) == doctest::Approx(0.16666666666666669).epsilon(1e-12));
}

TEST_CASE("dip separates unimodal from bimodal samples") {
  Rng rng(1);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> uni, bi;
  for (int i = 0; i < 1000; ++i) {
    uni.push_back(n01(rng));
    bi.push_back(n01(rng) + (i % 2 ? 6.0 : 0.0));
  }
  const double crit = dip_critical_value(1000, 0.01, 7);
  CHECK(dip_statistic(bi) > crit);
  CHECK(dip_statistic(uni) < crit);
}

TEST_CASE("two-sample ks") {
  const std::vector<double> a{0.1, 0.4, 0.7, 1.5, 2.2}, b{0.3, 0.9, 1.1, 2.5, 3.0, 3.1};
  const auto r = ks_two_sample(a, b);
  CHECK(r.statistic == doctest::Approx(0.5));
  CHECK(r.p_value == doctest::Approx(0.3670013850902251).epsilon(1e-9));
  const auto same = ks_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);
  CHECK_THROWS_AS(ks_two_sample(a, std::vector<double>{}), ContractError);
}

TEST_CASE("moments") {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8.5};
  CHECK(mean(x) == 2.5);
  CHECK(stddev(x) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(pearson(x, x) == doctest::Approx(1.0));
  CHECK(pearson(x, y) > 0.99);
}
