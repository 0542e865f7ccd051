#include "flowsilt/green.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <doctest.h>

#include <cmath>

using namespace flowsilt;

namespace {
const CoefficientModel bm = CoefficientModel::preset("bm1d");
const CoefficientModel f3 = CoefficientModel::preset("flow3d");
Vec v1(double x) { return Vec::Constant(1, x); }
}  // namespace

TEST_CASE("one-dimensional resolvent in closed form") {
  const GreenFunction G(bm, 1.0);
  CHECK(G(v1(0.0)) == doctest::Approx(0.5).epsilon(1e-14));
  for (double x : {-2.0, -0.3, 0.0, 0.7, 4.0}) {
    CHECK(std::abs(G(v1(x)) - 0.5 * std::exp(-std::abs(x))) < 1e-14);
    CHECK(std::abs(G(v1(x)) - resolvent_green_quadrature(bm, 1.0, Vec::Zero(1), v1(x))) < 1e-8);
  }
}

TEST_CASE("shifted resolvent is a translate") {
  const GreenFunction Gu(bm, 1.5, v1(0.4));
  const GreenFunction G0(bm, 1.5);
  for (double x : {-1.0, 0.4, 2.0}) CHECK(Gu(v1(x)) == doctest::Approx(G0(v1(x - 0.4))).epsilon(1e-14));
}

TEST_CASE("three-dimensional resolvent against the time integral") {
  const GreenFunction G(f3, 0.8);
  for (double r : {0.1, 0.5, 1.3, 3.0}) {
    Vec x(3);
    x << r, 0.5 * r, -0.25 * r;
    const double q = resolvent_green_quadrature(f3, 0.8, Vec::Zero(3), x);
    CHECK(std::abs(G(x) - q) < 1e-8 * std::max(1.0, q));
  }
}

TEST_CASE("two-dimensional profile against the Bessel function") {
  const double lambda = 1.3;
  const RadialResolvent g(2, lambda);
  const double kappa = std::sqrt(2 * lambda);
  for (double r : {0.01, 0.2, 1.0, 5.0}) {
    const double k0 = boost::math::cyl_bessel_k(0, kappa * r) / M_PI;
    CHECK(g.value(r) == doctest::Approx(k0).epsilon(1e-8));
  }
}

TEST_CASE("mollified kernels keep their mass") {
  for (double lambda : {1.0, 2.0}) {
    const GreenFunction G(bm, lambda);
    for (double eps : {0.4, 0.2, 0.1, 0.05}) {
      const MollifiedGreen Ge(G, eps);
      CHECK(std::abs(Ge.integral() - 1.0 / lambda) < 1e-8);
    }
  }
  // Brute-force check of the mass by summing the kernel on a fine line grid.
  const MollifiedGreen Ge(GreenFunction(bm, 2.0), 0.2);
  double s = 0.0;
  const double h = 1e-3;
  for (int i = -40000; i <= 40000; ++i) s += Ge(v1(i * h)) * h;
  CHECK(s == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("mollified kernel is the convolution with the bump") {
  const GreenFunction G(bm, 1.0);
  const MollifiedGreen Ge(G, 0.3);
  for (double x : {0.0, 0.1, 0.5}) {
    // int G(x - y) psi(y) dy over the bump support.
    double s = 0.0, mass = 0.0;
    const int n = 20000;
    const double rho = 0.3, h = 2 * rho / n;
    for (int i = 0; i <= n; ++i) {
      const double y = -rho + i * h;
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      const double psi = std::abs(y) < rho ? std::exp(-1.0 / (1.0 - (y / rho) * (y / rho))) : 0.0;
      s += w * G(v1(x - y)) * psi;
      mass += w * psi;
    }
    CHECK(Ge(v1(x)) == doctest::Approx(s / mass).epsilon(1e-6));
  }
}

TEST_CASE("L1 distance shrinks along the schedule") {
  const GreenFunction G(bm, 1.0);
  double prev = MollifiedGreen(G, 0.4).l1_distance_to_base();
  for (double eps : {0.2, 0.1, 0.05}) {
    const double d = MollifiedGreen(G, eps).l1_distance_to_base();
    CHECK(d < 0.9 * prev);
    prev = d;
  }
}

TEST_CASE("three-dimensional mollified kernel is finite at the origin") {
  const GreenFunction G(f3, 1.0);
  double prev = 0.0;
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    const MollifiedGreen Ge(G, eps);
    const double p = Ge.centered(Vec::Zero(3).eval().data());
    CHECK(std::isfinite(p));
    CHECK(p > prev);
    CHECK(p == doctest::Approx(Ge.peak()));
    prev = p;
    CHECK(std::abs(Ge.integral() - 1.0) < 1e-7);
  }
}

TEST_CASE("gradient and generator match finite differences") {
  const GreenFunction G(f3, 1.0);
  const MollifiedGreen Ge(G, 0.2);
  const Mat a = Mat::Identity(3, 3) * 0.7;
  const Mat B = generator_in_whitened(G, a);
  Mat Brow = B.transpose();  // row-major copy
  for (double r : {0.05, 0.3, 1.2}) {
    Vec z(3);
    z << r, -0.4 * r, 0.2 * r;
    double grad[3], gen = 0.0;
    const double v = Ge.value_grad_generator(z.data(), Brow.data(), grad, &gen);
    CHECK(v == doctest::Approx(Ge.centered(z.data())).epsilon(1e-12));
    const double h = 1e-4;
    double lap = 0.0;
    for (int i = 0; i < 3; ++i) {
      Vec p = z, m = z;
      p[i] += h;
      m[i] -= h;
      const double fp = Ge.centered(p.data()), fm = Ge.centered(m.data());
      CHECK(grad[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
      lap += (fp - 2 * v + fm) / (h * h);
    }
    CHECK(gen == doctest::Approx(0.5 * 0.7 * lap).epsilon(1e-4));
  }
}

TEST_CASE("resolvent applied to the mollified kernel is the bump") {
  const GreenFunction G(bm, 1.0);
  const MollifiedGreen Ge(G, 0.3);
  for (double x : {0.0, 0.1, 0.25, 0.5}) {
    const Vec z = v1(x);
    // The bump density in physical units at z.
    double mass = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double y = -0.3 + (i + 0.5) * 0.6 / n;
      mass += std::exp(-1.0 / (1.0 - (y / 0.3) * (y / 0.3))) * 0.6 / n;
    }
    const double psi = std::abs(x) < 0.3 ? std::exp(-1.0 / (1.0 - (x / 0.3) * (x / 0.3))) / mass : 0.0;
    CHECK(Ge.resolvent_applied(z.data()) == doctest::Approx(psi).epsilon(1e-5).scale(1e-3));
  }
}
