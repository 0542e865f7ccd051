#include "flowsilt/parallel.hpp"
#include "flowsilt/rng.hpp"
#include "flowsilt/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace flowsilt;

TEST_CASE("pairwise sum is exact on integers and order-fixed") {
  std::vector<double> v(1000);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(pairwise_sum(v) == 500500.0);
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("mean and variance") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto m = mean_se(v);
  CHECK(m.mean == 2.5);
  CHECK(m.variance == doctest::Approx(5.0 / 3.0));
  CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 12.0)));
  CHECK(variance_se(v).variance == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("clopper pearson") {
  const auto ci = clopper_pearson(50, 100, 0.95);
  CHECK(ci.lo == doctest::Approx(0.3983).epsilon(1e-3));
  CHECK(ci.hi == doctest::Approx(0.6017).epsilon(1e-3));
  CHECK(clopper_pearson(0, 10, 0.95).lo == 0.0);
  CHECK(clopper_pearson(10, 10, 0.95).hi == 1.0);
}

TEST_CASE("format_double round trips") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e7}) CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("philox known answer") {
  // Reference vector of the Philox4x32-10 generator.
  const auto out = rng::philox4x32_10({0, 0, 0, 0}, {0, 0});
  CHECK(out[0] == 0x6627e8d5u);
  CHECK(out[1] == 0xe169c58du);
  CHECK(out[2] == 0xbc57ac4cu);
  CHECK(out[3] == 0x9b00dbd8u);
}

TEST_CASE("parallel map is independent of worker count") {
  auto f = [](std::size_t i) { return std::sin(double(i)); };
  CHECK(parallel_map(100, 1, f) == parallel_map(100, 3, f));
  CHECK_THROWS(parallel_map(10, 2, [](std::size_t i) -> int {
    if (i == 7) throw std::runtime_error("x");
    return 0;
  }));
}
