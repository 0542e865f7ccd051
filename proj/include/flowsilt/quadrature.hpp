#pragma once

#include <functional>
#include <span>
#include <vector>

namespace flowsilt {

// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
  std::vector<double> x;
  std::vector<double> w;
};

// Cached and safe to call concurrently.
const GaussLegendre& gauss_legendre(int nodes);

// Integral of f over [a, b] with an n-point rule.
double gl_integrate(const std::function<double(double)>& f, double a, double b, int nodes);

// Composite rule: `panels` equal panels with `nodes` points each.
double gl_composite(const std::function<double(double)>& f, double a, double b, int panels, int nodes);

struct IntegrationResult {
  double value = 0.0;
  double error = 0.0;  // |I(n) - I(n/2)|
  int nodes = 0;
};

// Integral over the ordered simplex a <= s_1 <= ... <= s_k <= b (k = depth <= 3) by
// nested Gauss-Legendre.  The estimate compares n and n/2 nodes per axis and doubles
// n (up to max_nodes) until the relative estimate falls under rel_target.
IntegrationResult simplex_integrate(const std::function<double(std::span<const double>)>& f, double a, double b,
                                    int depth, int nodes = 32, double rel_target = 1e-7, int max_nodes = 128);

// Single evaluation with a fixed node count.
double simplex_integrate_fixed(const std::function<double(std::span<const double>)>& f, double a, double b, int depth,
                               int nodes);

}  // namespace flowsilt
