#include "flowsilt/quadrature.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/stats.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace flowsilt {

namespace {

GaussLegendre build_rule(int n) {
  GaussLegendre r;
  r.x.resize(static_cast<std::size_t>(n));
  r.w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double p0 = 1.0, p1 = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = w;
    r.w[n - 1 - i] = w;
  }
  return r;
}

void nested(const std::function<double(std::span<const double>)>& f, const GaussLegendre& g, double a, double hi,
            int level, std::vector<double>& s, double weight, std::vector<double>& acc) {
  // level counts down; s[level-1] is drawn in [a, hi].
  const double half = 0.5 * (hi - a), mid = 0.5 * (hi + a);
  for (std::size_t q = 0; q < g.x.size(); ++q) {
    const double t = mid + half * g.x[q];
    const double w = weight * half * g.w[q];
    s[static_cast<std::size_t>(level - 1)] = t;
    if (level == 1) {
      const double v = f(s);
      if (!std::isfinite(v)) {
        std::string loc;
        for (double x : s) loc += format_double(x) + " ";
        throw IntegrationError("simplex_integrate: non-finite integrand at s = " + loc);
      }
      acc.push_back(w * v);
    } else {
      nested(f, g, a, t, level - 1, s, w, acc);
    }
  }
}

}  // namespace

const GaussLegendre& gauss_legendre(int nodes) {
  if (nodes < 1 || nodes > 4096) throw ArgumentError("gauss_legendre: node count out of range");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussLegendre>> cache;
  std::lock_guard<std::mutex> lk(mu);
  auto& slot = cache[nodes];
  if (!slot) slot = std::make_unique<GaussLegendre>(build_rule(nodes));
  return *slot;
}

double gl_integrate(const std::function<double(double)>& f, double a, double b, int nodes) {
  const auto& g = gauss_legendre(nodes);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double s = 0.0;
  for (std::size_t i = 0; i < g.x.size(); ++i) s += g.w[i] * f(mid + half * g.x[i]);
  return half * s;
}

double gl_composite(const std::function<double(double)>& f, double a, double b, int panels, int nodes) {
  if (panels < 1) throw ArgumentError("gl_composite: panels must be >= 1");
  std::vector<double> parts(static_cast<std::size_t>(panels));
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) parts[p] = gl_integrate(f, a + p * h, a + (p + 1) * h, nodes);
  return pairwise_sum(parts);
}

double simplex_integrate_fixed(const std::function<double(std::span<const double>)>& f, double a, double b, int depth,
                               int nodes) {
  if (depth < 0 || depth > 3) throw ArgumentError("simplex_integrate: depth must be in 0..3");
  if (!(b >= a)) throw ArgumentError("simplex_integrate: need a <= b");
  std::vector<double> s(static_cast<std::size_t>(depth));
  if (depth == 0) return f(s);
  if (b == a) return 0.0;
  std::vector<double> acc;
  nested(f, gauss_legendre(nodes), a, b, depth, s, 1.0, acc);
  return pairwise_sum(acc);
}

IntegrationResult simplex_integrate(const std::function<double(std::span<const double>)>& f, double a, double b,
                                    int depth, int nodes, double rel_target, int max_nodes) {
  IntegrationResult r;
  if (nodes < 2) throw ArgumentError("simplex_integrate: need at least 2 nodes");
  double coarse = simplex_integrate_fixed(f, a, b, depth, nodes / 2);
  for (int n = nodes;; n *= 2) {
    const double fine = simplex_integrate_fixed(f, a, b, depth, n);
    r.value = fine;
    r.error = std::abs(fine - coarse);
    r.nodes = n;
    if (r.error <= rel_target * std::abs(fine) || r.error == 0.0 || n * 2 > max_nodes) break;
    coarse = fine;
  }
  return r;
}

}  // namespace flowsilt
