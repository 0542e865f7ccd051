#include "flowsilt/stats.hpp"

#include "flowsilt/error.hpp"

#include <boost/math/distributions/beta.hpp>

#include <charconv>
#include <cmath>

namespace flowsilt {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

MeanSe mean_se(std::span<const double> v) {
  MeanSe r;
  r.count = v.size();
  if (v.empty()) return r;
  r.mean = pairwise_sum(v) / double(v.size());
  if (v.size() < 2) return r;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - r.mean) * (v[i] - r.mean);
  r.variance = pairwise_sum(sq) / double(v.size() - 1);
  r.se = std::sqrt(r.variance / double(v.size()));
  return r;
}

VarianceSe variance_se(std::span<const double> v) {
  VarianceSe r;
  const double n = double(v.size());
  if (v.size() < 4) return r;
  const double mean = pairwise_sum(v) / n;
  std::vector<double> d2(v.size()), d4(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - mean;
    d2[i] = d * d;
    d4[i] = d2[i] * d2[i];
  }
  r.variance = pairwise_sum(d2) / (n - 1);
  const double m4 = pairwise_sum(d4) / n;
  const double s4 = r.variance * r.variance;
  r.se = std::sqrt(std::max(m4 - (n - 3) / (n - 1) * s4, 0.0) / n);
  return r;
}

Interval clopper_pearson(std::size_t k, std::size_t n, double confidence) {
  if (n == 0 || k > n || !(confidence > 0.0 && confidence < 1.0)) {
    throw ArgumentError("clopper_pearson: need 0 <= k <= n, n > 0 and confidence in (0,1)");
  }
  const double alpha = 1.0 - confidence;
  Interval iv;
  iv.lo = k == 0 ? 0.0 : boost::math::ibeta_inv(double(k), double(n - k + 1), alpha / 2);
  iv.hi = k == n ? 1.0 : boost::math::ibeta_inv(double(k + 1), double(n - k), 1 - alpha / 2);
  return iv;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace flowsilt
