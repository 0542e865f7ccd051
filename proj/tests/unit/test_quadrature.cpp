#include "flowsilt/error.hpp"
#include "flowsilt/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace flowsilt;

TEST_CASE("gauss legendre rules") {
  const auto& r = gauss_legendre(16);
  double sw = 0.0;
  for (double w : r.w) sw += w;
  CHECK(sw == doctest::Approx(2.0).epsilon(1e-14));
  // Exact for polynomials of degree 2n - 1.
  CHECK(gl_integrate([](double x) { return std::pow(x, 31); }, 0.0, 1.0, 16) == doctest::Approx(1.0 / 32).epsilon(1e-13));
  CHECK(gl_composite([](double x) { return std::exp(x); }, 0.0, 2.0, 4, 8) ==
        doctest::Approx(std::exp(2.0) - 1.0).epsilon(1e-13));
}

TEST_CASE("simplex volumes") {
  const auto one = [](std::span<const double>) { return 1.0; };
  const double t = 1.7;
  CHECK(simplex_integrate(one, 0.0, t, 2).value == doctest::Approx(t * t / 2).epsilon(1e-13));
  CHECK(simplex_integrate(one, 0.0, t, 3).value == doctest::Approx(t * t * t / 6).epsilon(1e-13));
  const auto id = [](std::span<const double> s) { return s[0]; };
  CHECK(simplex_integrate(id, 0.0, t, 1).value == doctest::Approx(t * t / 2).epsilon(1e-13));
  CHECK(simplex_integrate_fixed(one, 0.0, t, 0, 8) == 1.0);
}

TEST_CASE("simplex integral of a smooth integrand") {
  // int_{0 <= s1 <= s2 <= 1} exp(s1 + s2) = (e - 1)^2 / 2
  const auto f = [](std::span<const double> s) { return std::exp(s[0] + s[1]); };
  const auto r = simplex_integrate(f, 0.0, 1.0, 2);
  CHECK(r.value == doctest::Approx(0.5 * std::pow(std::exp(1.0) - 1.0, 2)).epsilon(1e-12));
  CHECK(r.error < 1e-7);
}

TEST_CASE("non-finite integrands are reported") {
  const auto bad = [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(simplex_integrate(bad, 0.0, 1.0, 1), IntegrationError);
}
