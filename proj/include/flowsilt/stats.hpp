#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flowsilt {

// Fixed-order pairwise summation; identical input order gives identical bits.
double pairwise_sum(std::span<const double> v);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double variance = 0.0;  // unbiased sample variance
  std::size_t count = 0;
};

MeanSe mean_se(std::span<const double> v);

// Unbiased sample variance with the large-sample standard error
// sqrt((m4 - (n-3)/(n-1) s^4) / n).
struct VarianceSe {
  double variance = 0.0;
  double se = 0.0;
};
VarianceSe variance_se(std::span<const double> v);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Exact two-sided binomial confidence interval for the success probability.
Interval clopper_pearson(std::size_t successes, std::size_t trials, double confidence);

// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace flowsilt
