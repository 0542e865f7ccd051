#pragma once

// Reference values computed independently of the library.

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

// E M_t^k for dM = sqrt(M) dW, M_0 = m0, k = 0..kmax, by RK4 on d/dt m_k = k(k-1)/2 m_{k-1}.
inline std::vector<double> feller_moments(int kmax, double t, double m0 = 1.0, int steps = 20000) {
  std::vector<double> m(std::size_t(kmax) + 1);
  for (int k = 0; k <= kmax; ++k) m[std::size_t(k)] = std::pow(m0, k);
  auto rhs = [kmax](const std::vector<double>& y) {
    std::vector<double> d(y.size(), 0.0);
    for (int k = 2; k <= kmax; ++k) d[std::size_t(k)] = 0.5 * k * (k - 1) * y[std::size_t(k - 1)];
    return d;
  };
  const double h = t / steps;
  for (int s = 0; s < steps; ++s) {
    auto add = [](const std::vector<double>& a, const std::vector<double>& b, double c) {
      std::vector<double> r(a);
      for (std::size_t i = 0; i < a.size(); ++i) r[i] += c * b[i];
      return r;
    };
    const auto k1 = rhs(m), k2 = rhs(add(m, k1, h / 2)), k3 = rhs(add(m, k2, h / 2)), k4 = rhs(add(m, k3, h));
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return m;
}

// Composite Simpson on [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 4000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3;
}

// E exp(-(x + sqrt(v) Z)^2 / 2) for standard normal Z at x = 0, by quadrature in z.
inline double gaussian_bump_expectation(double v) {
  const double c = 1.0 / std::sqrt(2.0 * M_PI);
  return simpson([&](double z) { return c * std::exp(-0.5 * z * z) * std::exp(-0.5 * v * z * z); }, -14.0, 14.0, 8000);
}

}  // namespace oracle
