#include "flowsilt/error.hpp"
#include "flowsilt/gaussian.hpp"

#include <doctest.h>

#include <cmath>

using namespace flowsilt;

namespace {
const CoefficientModel bm = CoefficientModel::preset("bm1d");

GaussianFunctional bump1d(double center = 0.0) {
  return GaussianFunctional::from_test(TestFunction::gaussian(Vec::Constant(1, center), Mat::Identity(1, 1)), 1);
}

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Trapezoid rule on [-L, L]; spectrally accurate for Gaussian integrands.
template <class F>
double trap(F f, double L = 12.0, int n = 240) {
  const double h = 2 * L / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) s += (i == 0 || i == n ? 0.5 : 1.0) * f(-L + i * h);
  return s * h;
}
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

TEST_CASE("unit functional is invariant") {
  const auto one = GaussianFunctional::one(2, 1);
  CHECK(one.is_constant());
  const auto q = semigroup_apply(bm, one, 0.8);
  CHECK(q.is_constant());
  CHECK(q.coeff() == doctest::Approx(1.0));
  CHECK(diagonal_restrict(one, 1, 2).is_constant());
}

TEST_CASE("one-particle semigroup on a bump") {
  for (double t : {0.0, 0.3, 1.0, 2.5}) {
    const auto q = semigroup_apply(bm, bump1d(), t);
    CHECK(q.coeff() == doctest::Approx(1.0 / std::sqrt(1 + 2 * t)).epsilon(1e-14));
    CHECK(q.precision()(0, 0) == doctest::Approx(1.0 / (1 + 2 * t)).epsilon(1e-14));
    // Direct convolution oracle at x = 0.4.
    const double x = 0.4;
    const double direct = trap([&](double z) { return kInvSqrt2Pi * std::exp(-z * z / 2) *
                                                      std::exp(-0.5 * std::pow(x + std::sqrt(2 * t) * z, 2)); });
    CHECK(q.value(Vec::Constant(1, x)) == doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("semigroup law and contraction") {
  const auto f = GaussianFunctional::tensor({bump1d(0.3), bump1d(-0.5), bump1d(1.0)});
  const auto a = semigroup_apply(bm, semigroup_apply(bm, f, 0.4), 0.7);
  const auto b = semigroup_apply(bm, f, 1.1);
  const Vec x = vec({0.2, -0.1, 0.9});
  CHECK(a.value(x) == doctest::Approx(b.value(x)).epsilon(1e-10));
  CHECK((a.precision() - b.precision()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(b.sup_norm() <= f.sup_norm() * (1 + 1e-12));
}

TEST_CASE("semigroup commutes with relabelling") {
  const auto f = GaussianFunctional::tensor({bump1d(0.3), bump1d(-0.5)});
  const auto g = GaussianFunctional::tensor({bump1d(-0.5), bump1d(0.3)});
  const auto qf = semigroup_apply(bm, f, 0.6), qg = semigroup_apply(bm, g, 0.6);
  CHECK(qf.value(vec({0.1, 0.7})) == doctest::Approx(qg.value(vec({0.7, 0.1}))).epsilon(1e-13));
}

TEST_CASE("two-particle semigroup matches the shared-noise covariance") {
  // (Y1, Y2) with Var = 2t and Cov = t under bm1d.
  const double t = 0.5;
  const auto f = GaussianFunctional::tensor({bump1d(), bump1d()});
  const auto q = semigroup_apply(bm, f, t);
  Mat C(2, 2);
  C << 2 * t, t, t, 2 * t;
  const Mat Lc = C.llt().matrixL();
  const Vec x = vec({0.2, -0.3});
  const double direct = trap([&](double z1) {
    return trap([&](double z2) {
      const Vec y = x + Lc * vec({z1, z2});
      return kInvSqrt2Pi * kInvSqrt2Pi * std::exp(-0.5 * (z1 * z1 + z2 * z2)) * std::exp(-0.5 * y.squaredNorm());
    }, 10.0, 160);
  }, 10.0, 160);
  CHECK(q.value(x) == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("diagonal embedding") {
  const Mat E = diagonal_embedding(3, 1, 1, 2);
  // slot 1 <- x1, slot 2 <- x1, slot 3 <- x2
  Mat expect(3, 2);
  expect << 1, 0, 1, 0, 0, 1;
  CHECK(E == expect);
  const Mat E2 = diagonal_embedding(3, 1, 2, 1);
  Mat expect2(3, 2);
  expect2 << 0, 1, 1, 0, 0, 1;
  CHECK(E2 == expect2);
}

TEST_CASE("diagonal restriction") {
  // exp(-(x1 - x2)^2 / 2) is identically 1 on the diagonal.
  Mat P(2, 2);
  P << 1, -1, -1, 1;
  const GaussianFunctional f(2, 1, 1.0, P, Vec::Zero(2));
  const auto g = diagonal_restrict(f, 1, 2);
  CHECK(g.arity() == 1);
  CHECK(g.is_constant());
  CHECK(g.value(Vec::Constant(1, 3.7)) == doctest::Approx(1.0));

  const auto h = GaussianFunctional::tensor({bump1d(0.2), bump1d(-0.4), bump1d(1.0)});
  const auto r = diagonal_restrict(h, 2, 1);
  const Vec y = vec({0.3, -0.6});
  CHECK(r.value(y) == doctest::Approx(h.value(vec({-0.6, 0.3, -0.6}))).epsilon(1e-13));
}

TEST_CASE("linear functional restricted along the diagonal") {
  // f(x1, x2, x3) = x1 + x2 + x3 arises as the t-derivative at 0 of exp(t (x1 + x2 + x3)).
  const double eps = 1e-6;
  const GaussianFunctional f(3, 1, 1.0, Mat::Zero(3, 3), Vec::Constant(3, eps));
  const auto g = diagonal_restrict(f, 1, 2);
  const Vec y = vec({0.7, -0.2});
  const double lin = (g.value(y) - 1.0) / eps;
  CHECK(lin == doctest::Approx(2 * 0.7 - 0.2).epsilon(1e-5));
}

TEST_CASE("projection freezes the first block") {
  const auto f = GaussianFunctional::tensor({bump1d(0.2), bump1d(-0.4)});
  const auto st = project_first(f);
  const auto q0 = semigroup_apply(bm, st, 0.0);
  const Vec x = vec({0.5, 0.1});
  CHECK(q0.value(x) == doctest::Approx(f.value(x)).epsilon(1e-14));
  CHECK(semigroup_apply(bm, project_first(GaussianFunctional::one(2, 1)), 0.4).is_constant());

  // Block 1 is held at x1; block 2 moves alone with variance 2t.
  const double t = 0.7;
  const auto qt = semigroup_apply(bm, st, t);
  const double direct = trap([&](double z) {
    return kInvSqrt2Pi * std::exp(-z * z / 2) * f.value(vec({x[0], x[1] + std::sqrt(2 * t) * z}));
  });
  CHECK(qt.value(x) == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("nested semigroup, restriction, semigroup against quadrature") {
  // Q_s Phi_12 Q^2_{t-s} (phi (x) phi) for phi = exp(-x^2 / 2), bm1d.
  const double s = 0.4, t = 1.0, x = 0.3;
  const auto inner = semigroup_apply(bm, GaussianFunctional::tensor({bump1d(), bump1d()}), t - s);
  const auto value = semigroup_apply(bm, diagonal_restrict(inner, 1, 2), s).value(Vec::Constant(1, x));

  Mat C(2, 2);
  C << 2 * (t - s), t - s, t - s, 2 * (t - s);
  const Mat Lc = C.llt().matrixL();
  const double direct = trap([&](double z0) {
    const double y = x + std::sqrt(2 * s) * z0;
    return kInvSqrt2Pi * std::exp(-z0 * z0 / 2) * trap([&](double z1) {
             return trap([&](double z2) {
               const Vec w = Vec::Constant(2, y) + Lc * vec({z1, z2});
               return kInvSqrt2Pi * kInvSqrt2Pi * std::exp(-0.5 * (z1 * z1 + z2 * z2)) *
                      std::exp(-0.5 * w.squaredNorm());
             }, 9.0, 90);
           }, 9.0, 90);
  }, 9.0, 90);
  CHECK(value == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("product measure integrals") {
  const auto mu0 = InitialMeasureSpec::atoms({{Vec::Constant(1, 0.0), 0.5}, {Vec::Constant(1, 1.0), 0.25}});
  const auto f = GaussianFunctional::tensor({bump1d(), bump1d()});
  const double b0 = 1.0, b1 = std::exp(-0.5);
  const double expect = std::pow(0.5 * b0 + 0.25 * b1, 2);
  CHECK(integrate_product_measure(f, mu0) == doctest::Approx(expect).epsilon(1e-14));
  CHECK_THROWS_AS(integrate_product_measure(f, InitialMeasureSpec::uniform_box(Vec::Zero(1), Vec::Ones(1), 1.0)),
                  UnsupportedError);
}
