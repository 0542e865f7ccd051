#include "../oracles.hpp"
#include "flowsilt/error.hpp"
#include "flowsilt/moments.hpp"

#include <doctest.h>

#include <cmath>

using namespace flowsilt;

namespace {
const CoefficientModel bm = CoefficientModel::preset("bm1d");
const InitialMeasureSpec delta0 = InitialMeasureSpec::point_mass(Vec::Zero(1));

TestFunction bump(double c = 0.0) { return TestFunction::gaussian(Vec::Constant(1, c), Mat::Identity(1, 1)); }
std::vector<TestFunction> units(int k) { return std::vector<TestFunction>(std::size_t(k), TestFunction::one()); }
}  // namespace

TEST_CASE("term counts") {
  CHECK(moment_formula(1).terms.size() == 1);
  CHECK(moment_formula(2).terms.size() == 2);
  CHECK(moment_formula(3).terms.size() == 5);
  CHECK(moment_formula(4).terms.size() == 14);
  for (const auto& t : moment_formula(4).terms) {
    CHECK(t.branches.back() == 0);
    CHECK(t.ell0 >= 1);
  }
  CHECK_THROWS(moment_formula(5));
}

TEST_CASE("expression ledger") {
  GammaExpr e{1, {GammaOp::phi(1, 2)}};
  CHECK(e.input_arity() == 2);
  GammaExpr p{2, {GammaOp::pi1(), GammaOp::phi(1, 2)}};
  CHECK(p.input_arity() == 3);
  GammaExpr bad{1, {GammaOp::pi1()}};
  CHECK_THROWS_AS(bad.input_arity(), ExpressionError);
}

TEST_CASE("gamma expressions") {
  GammaExpr e{1, {GammaOp::phi(1, 2)}};
  const auto out = gamma_evaluate(bm, e, GaussianFunctional::one(2, 1), {0.3, 0.8});
  CHECK(out.is_constant());
  CHECK(out.coeff() == doctest::Approx(1.0));

  // pure Q / pi1 chain with zero gaps is the identity
  const auto f = GaussianFunctional::tensor({GaussianFunctional::from_test(bump(0.2), 1),
                                             GaussianFunctional::from_test(bump(-0.3), 1)});
  GammaExpr chain{2, {GammaOp::pi1()}};
  const auto g = gamma_evaluate(bm, chain, f, {0.0, 0.0});
  Vec x(2);
  x << 0.4, -0.1;
  CHECK(g.value(x) == doctest::Approx(f.value(x)).epsilon(1e-14));
}

TEST_CASE("first moments") {
  CHECK(mixed_moment(bm, units(1), {0.7}, delta0).value == doctest::Approx(1.0));
  const auto two = InitialMeasureSpec::point_mass(Vec::Zero(1), 2.5);
  CHECK(mixed_moment(bm, units(1), {0.7}, two).value == doctest::Approx(2.5));
  for (double t : {0.25, 1.0, 3.0}) {
    const double q = oracle::gaussian_bump_expectation(2 * t);
    CHECK(std::abs(mixed_moment(bm, {bump()}, {t}, delta0).value - q) < 1e-10);
    CHECK(std::abs(q - 1.0 / std::sqrt(1 + 2 * t)) < 1e-10);
  }
}

TEST_CASE("second moment of the mass depends on the earlier time") {
  CHECK(mixed_moment(bm, units(2), {0.5, 0.9}, delta0).value == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(mixed_moment(bm, units(2), {0.2, 2.0}, delta0).value == doctest::Approx(1.2).epsilon(1e-10));
}

TEST_CASE("mass moments agree with the branching diffusion ODE") {
  for (double t : {0.5, 1.0}) {
    const auto m = oracle::feller_moments(4, t);
    CHECK(std::abs(mixed_moment(bm, units(3), {t, t, t}, delta0).value - m[3]) < 1e-8);
    CHECK(std::abs(mixed_moment(bm, units(4), {t, t, t, t}, delta0).value - m[4]) < 1e-8);
  }
  const auto m = oracle::feller_moments(4, 1.0);
  CHECK(m[3] == doctest::Approx(5.5));
  CHECK(m[4] == doctest::Approx(19.0));
}

TEST_CASE("second moment of a bump against direct quadrature") {
  // E <phi, mu_t>^2 = <Q^2_t phi(x)phi, mu0^2> + int_0^t <Q_s Phi_12 Q^2_{t-s} phi(x)phi, mu0> ds.
  const double t = 0.6;
  const auto res = mixed_moment(bm, {bump(), bump()}, {t, t}, delta0);
  // Q^2_r (phi (x) phi)(x, x) for r = t - s, then Q_s at 0; bm1d has Var 2r, Cov r.
  auto inner = [](double r, double y) {
    // integral of exp(-|y + W|^2 / 2) over W ~ N(0, C), C = r [[2, 1], [1, 2]]
    const double a = 1 + 2 * r, b = r;  // I + C
    const double det = a * a - b * b;
    const double quad = y * y * (2 * a - 2 * b) / det;  // (y, y)^T (I + C)^{-1} (y, y)
    return std::exp(-0.5 * quad) / std::sqrt(det);
  };
  const double chaos = inner(t, 0.0);
  const double branch = oracle::simpson(
      [&](double s) {
        const double c = 1.0 / std::sqrt(2.0 * M_PI);
        return oracle::simpson(
            [&](double z) { return c * std::exp(-0.5 * z * z) * inner(t - s, std::sqrt(2 * s) * z); }, -12, 12, 2400);
      },
      0.0, t, 400);
  CHECK(res.value == doctest::Approx(chaos + branch).epsilon(1e-8));
}

TEST_CASE("moment argument checks") {
  CHECK_THROWS(mixed_moment(bm, {bump(), bump()}, {0.5, 0.2}, delta0));
  CHECK_THROWS_AS(mixed_moment(bm, units(1), {1.0}, InitialMeasureSpec::uniform_box(Vec::Zero(1), Vec::Ones(1), 1.0)),
                  UnsupportedError);
}

TEST_CASE("term dump lists every term") {
  const auto f = moment_formula(3);
  const auto text = dump_terms(f);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines >= f.terms.size());
}
