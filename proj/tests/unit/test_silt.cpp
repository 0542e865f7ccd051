#include "flowsilt/error.hpp"
#include "flowsilt/silt.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace flowsilt;

namespace {
const CoefficientModel bm = CoefficientModel::preset("bm1d");
const CoefficientModel still = CoefficientModel::constant(Vec::Zero(1), Mat::Zero(1, 1));

// One unit atom sitting at x for every frame of [0, T].
Trajectory frozen_atom(double x, int steps, double T) {
  Trajectory tr;
  tr.dim = 1;
  tr.n = 1;
  tr.substeps = steps;
  tr.stride = 1;
  for (int k = 0; k <= steps; ++k) {
    Frame f;
    f.time = T * k / steps;
    f.substep = k;
    f.positions = {x};
    f.hashes = {1};
    tr.frames.push_back(f);
  }
  return tr;
}

Trajectory empty_path(int steps, double T) {
  auto tr = frozen_atom(0.0, steps, T);
  for (auto& f : tr.frames) {
    f.positions.clear();
    f.hashes.clear();
  }
  return tr;
}

SimSpec small_spec(std::uint64_t seed) {
  SimSpec s;
  s.model = bm;
  s.mu0 = InitialMeasureSpec::point_mass(Vec::Zero(1));
  s.n = 6;
  s.substeps = 4;
  s.horizon = 1.0;
  s.seed = seed;
  return s;
}
}  // namespace

TEST_CASE("frozen atom") {
  const double lambda = 1.5, T = 1.0;
  const MollifiedGreen Ge(GreenFunction(bm, lambda), 0.2);
  const Vec u = Vec::Constant(1, 0.1);
  const auto tr = frozen_atom(0.3, 16, T);
  const double k0 = lambda * Ge.centered(Vec::Constant(1, -0.1).eval().data());
  CHECK(gamma_epsilon(tr, Ge, still, u, T) == doctest::Approx(k0 * T * T / 2).epsilon(1e-13));

  const Vec zero = Vec::Zero(1);
  CHECK(double_point_term(tr, Ge, zero, T) == doctest::Approx(T * Ge.peak()).epsilon(1e-13));

  const auto c = tanaka_decomposition(tr, Ge, still, zero, T);
  CHECK(c.stochastic_term == doctest::Approx(0.0));
  CHECK(std::abs(c.ito_residual) < 1e-13);
  CHECK(c.renormalized == doctest::Approx(c.gamma - c.double_point));
}

TEST_CASE("empty population and zero horizon") {
  const MollifiedGreen Ge(GreenFunction(bm, 1.0), 0.2);
  const Vec zero = Vec::Zero(1);
  const auto e = empty_path(16, 1.0);
  CHECK(gamma_epsilon(e, Ge, bm, zero, 1.0) == 0.0);
  CHECK(double_point_term(e, Ge, zero, 1.0) == 0.0);
  const auto tr = frozen_atom(0.0, 16, 1.0);
  const auto c = tanaka_decomposition(tr, Ge, bm, zero, 0.0);
  CHECK(c.gamma == 0.0);
  CHECK(c.double_point == 0.0);
  CHECK(c.stochastic_term == 0.0);
  CHECK(c.ito_residual == 0.0);
}

TEST_CASE("resolution and range checks") {
  const MollifiedGreen Ge(GreenFunction(bm, 1.0), 0.2);
  const Vec zero = Vec::Zero(1);
  CHECK_THROWS_AS(gamma_epsilon(frozen_atom(0.0, 4, 1.0), Ge, bm, zero, 1.0), ResolutionError);
  CHECK_THROWS_AS(gamma_epsilon(frozen_atom(0.0, 16, 1.0), Ge, bm, zero, 0.53), RangeError);
  auto coarse = frozen_atom(0.0, 16, 1.0);
  coarse.stride = 2;
  CHECK_THROWS_AS(gamma_epsilon(coarse, Ge, bm, zero, 1.0), ResolutionError);
}

TEST_CASE("decomposition on simulated paths") {
  const MollifiedGreen Ge(GreenFunction(bm, 1.0), 0.2);
  const auto traj = simulate_trajectory(small_spec(3), 0, 1);
  const auto c = tanaka_decomposition(traj, Ge, bm, Vec::Zero(1), 1.0);
  CHECK(c.gamma == doctest::Approx(gamma_epsilon(traj, Ge, bm, Vec::Zero(1), 1.0)).epsilon(1e-12));
  CHECK(c.double_point == doctest::Approx(double_point_term(traj, Ge, Vec::Zero(1), 1.0)).epsilon(1e-12));
  CHECK(c.ito_residual ==
        doctest::Approx(c.renormalized - (c.lambda_term - c.boundary_term + c.stochastic_term)).scale(1.0));
  CHECK(c.tanaka == doctest::Approx(c.lambda_term - c.boundary_term + c.stochastic_noise).scale(1.0));
}

TEST_CASE("exact double points are the eps limit in one dimension") {
  const auto traj = simulate_trajectory(small_spec(4), 1, 1);
  const GreenFunction G(bm, 1.0);
  const double exact = exact_double_point(traj, G, Vec::Zero(1), 1.0);
  const double near = double_point_term(traj, MollifiedGreen(G, 0.01), Vec::Zero(1), 1.0);
  CHECK(near == doctest::Approx(exact).epsilon(1e-3));
}

TEST_CASE("small-ball occupation of a frozen atom") {
  // |x - x| < h always: density 1 / (2h) over the triangle s <= t.
  const auto tr = frozen_atom(0.0, 16, 1.0);
  CHECK(small_ball_occupation(tr, 0.1, Vec::Zero(1), 1.0) == doctest::Approx(0.5 / 0.2));
}

TEST_CASE("degenerate schedule gives zero distances") {
  EpsStudyOptions o;
  o.sim = small_spec(5);
  o.replicates = 4;
  o.eps = {0.2, 0.2, 0.2};
  o.threads = 1;
  const auto res = epsilon_convergence_study(o);
  for (const auto& row : res.rows) CHECK(row.l2 == 0.0);
}

TEST_CASE("study output") {
  EpsStudyOptions o;
  o.sim = small_spec(6);
  o.replicates = 3;
  o.eps = {0.4, 0.2, 0.1};
  o.ball_radii = {0.2, 0.1};
  o.threads = 2;
  const auto res = epsilon_convergence_study(o);
  CHECK(res.rows.size() == 2);
  CHECK(res.replicates.size() == 3);
  std::ostringstream a, b;
  write_silt_components_csv(a, res);
  write_eps_study_csv(b, res);
  CHECK(a.str().rfind("replicate,eps,gamma,double_point,lambda_term,boundary_term,stochastic_term,renormalized,"
                      "ito_residual\n",
                      0) == 0);
  CHECK(b.str().rfind("eps_i,eps_j,L2_distance,stderr\n", 0) == 0);

  o.threads = 1;
  const auto again = epsilon_convergence_study(o);
  std::ostringstream a2;
  write_silt_components_csv(a2, again);
  CHECK(a2.str() == a.str());
}
