// Acceptance run: one PASS/FAIL line per criterion, followed by a summary.
// Exit status is nonzero when a criterion fails, unless it is listed in
// kKnownDeviations (printed explicitly; see the README).  --strict ignores the list.

#include "../oracles.hpp"
#include "flowsilt/genealogy.hpp"
#include "flowsilt/green.hpp"
#include "flowsilt/harness.hpp"
#include "flowsilt/moments.hpp"
#include "flowsilt/parallel.hpp"
#include "flowsilt/particles.hpp"
#include "flowsilt/rng.hpp"
#include "flowsilt/silt.hpp"
#include "flowsilt/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

using namespace flowsilt;

namespace {

const std::set<std::string> kKnownDeviations{"singularity_diagnostic"};

int g_threads = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

SimSpec bm1d_spec(int n, int substeps, double horizon, std::uint64_t seed) {
  SimSpec s;
  s.model = CoefficientModel::preset("bm1d");
  s.mu0 = InitialMeasureSpec::point_mass(Vec::Zero(1));
  s.n = n;
  s.substeps = substeps;
  s.horizon = horizon;
  s.seed = seed;
  return s;
}

// ---------------------------------------------------------------------------

Outcome mass_law() {
  const double T = 1.0;
  const auto mass = sample_terminal_mass(bm1d_spec(100, 1, T, 101), 10000, g_threads);
  const auto m = mean_se(mass);
  const auto v = variance_se(mass);
  const auto ode = oracle::feller_moments(2, T);
  const double var_oracle = ode[2] - ode[1] * ode[1];
  const double zm = (m.mean - ode[1]) / m.se, zv = (v.variance - var_oracle) / v.se;
  return {std::abs(zm) <= 3 && std::abs(zv) <= 5, "mean " + num(m.mean) + " vs " + num(ode[1]) + " (z " + num(zm) +
                                                      ", bound 3); var " + num(v.variance) + " vs " +
                                                      num(var_oracle) + " (z " + num(zv) + ", bound 5)"};
}

Outcome offspring_law() {
  const auto tally = sample_offspring(bm1d_spec(100, 1, 1.0, 102), 1000, g_threads);
  const double p = double(tally.doubled) / double(tally.events);
  const auto ci = clopper_pearson(tally.doubled, tally.events, 0.999);
  bool ok = true;
  std::string d;
  for (int q = 1; q <= 6; ++q) {
    // N takes values 0 and 2, so E N^q = 2^q P(N = 2).
    const double scale = std::ldexp(1.0, q), target = std::ldexp(1.0, q - 1);
    const bool in = scale * ci.lo <= target && target <= scale * ci.hi;
    ok = ok && in;
    d += "q" + std::to_string(q) + " " + num(scale * p) + (in ? " in" : " outside") + " [" + num(scale * ci.lo) + "," +
         num(scale * ci.hi) + "]; ";
  }
  return {ok, d + std::to_string(tally.events) + " events, 99.9% exact intervals"};
}

Outcome martingale_problem() {
  // Z_T(f) and its bracket along full-resolution paths, computed here from the frames.
  const SimSpec spec = bm1d_spec(50, 4, 1.0, 103);
  auto f = [](double x) { return std::exp(-0.5 * x * x); };
  auto df = [](double x) { return -x * std::exp(-0.5 * x * x); };
  auto d2f = [](double x) { return (x * x - 1.0) * std::exp(-0.5 * x * x); };
  const auto rows = parallel_map(10000, g_threads, [&](std::size_t r) {
    const auto traj = simulate_trajectory(spec, r, 1);
    const double w = traj.weight();
    double drift = 0.0, bracket = 0.0;
    for (std::size_t k = 0; k + 1 < traj.frames.size(); ++k) {
      const auto& fr = traj.frames[k];
      const double dt = traj.frames[k + 1].time - fr.time;
      double lf = 0.0, f2 = 0.0, g = 0.0;
      for (double x : fr.positions) {
        lf += d2f(x);  // (1/2) a f'' with a = 2
        f2 += f(x) * f(x);
        g += df(x);
      }
      drift += w * lf * dt;
      bracket += (w * f2 + w * w * g * g) * dt;  // sigma = 1
    }
    auto mass_f = [&](const Frame& fr) {
      double s = 0.0;
      for (double x : fr.positions) s += f(x);
      return w * s;
    };
    const double z = mass_f(traj.frames.back()) - mass_f(traj.frames.front()) - drift;
    return std::pair{z, bracket};
  });
  std::vector<double> z, z2, br;
  for (const auto& [a, b] : rows) {
    z.push_back(a);
    z2.push_back(a * a);
    br.push_back(b);
  }
  const auto mz = mean_se(z), mz2 = mean_se(z2), mb = mean_se(br);
  const double zs = mz.mean / mz.se, rel = std::abs(mz2.mean - mb.mean) / mb.mean;
  return {std::abs(zs) <= 3 && rel <= 0.10, "E Z " + num(mz.mean) + " (z " + num(zs) + ", bound 3); E Z^2 " +
                                                num(mz2.mean) + " vs bracket " + num(mb.mean) + " (rel " + num(rel) +
                                                ", bound 0.1)"};
}

Outcome moment_oracle_golden() {
  const auto bm = CoefficientModel::preset("bm1d");
  const auto delta = InitialMeasureSpec::point_mass(Vec::Zero(1));
  const auto bump = TestFunction::gaussian(Vec::Zero(1), Mat::Identity(1, 1));
  bool ok = true;
  std::string d;
  for (double t : {0.25, 1.0}) {
    const double got = mixed_moment(bm, {bump}, {t}, delta).value;
    const double ref = oracle::gaussian_bump_expectation(2 * t);
    ok = ok && std::abs(got - ref) <= 1e-6;
    d += "order1 t=" + num(t) + " gap " + num(std::abs(got - ref)) + "; ";
  }
  const auto ode = oracle::feller_moments(4, 1.0);
  for (int k : {3, 4}) {
    const double got = mixed_moment(bm, std::vector<TestFunction>(std::size_t(k), TestFunction::one()),
                                    std::vector<double>(std::size_t(k), 1.0), delta)
                           .value;
    ok = ok && std::abs(got - ode[std::size_t(k)]) <= 1e-8;
    d += "order" + std::to_string(k) + " " + num(got) + " vs " + num(ode[std::size_t(k)]) + "; ";
  }
  const auto n3 = moment_formula(3).terms.size(), n4 = moment_formula(4).terms.size();
  ok = ok && n3 == 5 && n4 == 14;
  return {ok, d + "term counts " + std::to_string(n3) + ", " + std::to_string(n4)};
}

Outcome oracle_vs_simulation() {
  const SimSpec spec = bm1d_spec(200, 1, 1.0, 105);
  const std::vector<double> times{0.25, 0.5, 0.75, 1.0};
  const auto battery = gaussian_battery(1, 4);
  const auto samples = sample_test_integrals(spec, battery, times, 20000, g_threads);
  bool ok = true;
  std::string d;
  MomentOptions mo;
  mo.threads = g_threads;
  for (int k = 1; k <= 4; ++k) {
    std::vector<double> prod;
    for (const auto& s : samples) {
      double p = 1.0;
      for (int i = 0; i < k; ++i) p *= s[std::size_t(i)];
      prod.push_back(p);
    }
    const auto m = mean_se(prod);
    const double ref = mixed_moment(spec.model, std::vector<TestFunction>(battery.begin(), battery.begin() + k),
                                    std::vector<double>(times.begin(), times.begin() + k), spec.mu0, mo)
                           .value;
    const double z = (m.mean - ref) / m.se;
    ok = ok && std::abs(z) <= 5;
    d += "order" + std::to_string(k) + " " + num(m.mean) + " vs " + num(ref) + " (z " + num(z) + "); ";
  }
  return {ok, d + "bound 5"};
}

Outcome genealogy() {
  rng::PhiloxEngine eng(106, 0);
  std::size_t agree = 0;
  const std::size_t total = 100000;
  for (std::size_t t = 0; t < total; ++t) {
    const int size = 3 + int(eng() % 2u);
    const int len = 1 + int(eng() % 10u);
    std::vector<Label> labels;
    while (int(labels.size()) < size) {
      Label l;
      l.root = 1 + eng() % 3u;
      for (int i = 0; i < len; ++i) l.bits.push_back(std::uint8_t(eng() & 1u));
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    }
    agree += classify_topology(labels) == classify_topology_bruteforce(labels);
  }
  const bool counts = arrangement_count(Topology::II) == 12 && arrangement_count(Topology::III) == 12 &&
                      arrangement_count(Topology::IV) == 48 && arrangement_count(Topology::VA) == 12 &&
                      arrangement_count(Topology::VB) == 48;
  return {agree == total && counts, std::to_string(agree) + "/" + std::to_string(total) +
                                        " tuples agree; arrangement counts " + (counts ? "match" : "differ")};
}

// Time integral of e^{-lambda t} (4 pi t)^{-1/2} e^{-x^2 / 4t}, the bm1d resolvent, in log time.
double resolvent_bm1d(double lambda, double x) {
  return oracle::simpson(
      [&](double s) {
        const double t = std::exp(s);
        return t * std::exp(-lambda * t - x * x / (4 * t)) / std::sqrt(4 * M_PI * t);
      },
      -40.0, 5.0, 40000);
}

Outcome green_function() {
  const auto bm = CoefficientModel::preset("bm1d");
  const double lambda = 1.0;
  const GreenFunction G(bm, lambda);
  double worst = 0.0;
  for (double x : {0.0, 0.05, 0.3, 1.0, 2.5, 6.0}) worst = std::max(worst, std::abs(G(Vec::Constant(1, x)) - resolvent_bm1d(lambda, x)));
  bool ok = worst <= 1e-8;
  std::string d = "closed form vs quadrature max gap " + num(worst) + "; ";
  double mass_gap = 0.0, prev = -1.0, worst_ratio = 0.0;
  bool decreasing = true;
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    const MollifiedGreen Ge(G, eps);
    mass_gap = std::max(mass_gap, std::abs(Ge.integral() - 1.0 / lambda));
    // ||G_eps - G||_1 on a fine grid; G is the exact closed form e^{-|x|} / 2.
    double l1 = 0.0;
    const double h = 2e-4;
    for (int i = 0; i <= 200000; ++i) {
      const double x = i * h;
      const double w = (i == 0 || i == 200000) ? 0.5 : 1.0;
      l1 += 2 * w * std::abs(Ge(Vec::Constant(1, x)) - 0.5 * std::exp(-x)) * h;
    }
    if (prev > 0) {
      worst_ratio = std::max(worst_ratio, l1 / prev);
      decreasing = decreasing && l1 < 0.9 * prev;
    }
    prev = l1;
  }
  ok = ok && mass_gap <= 1e-8 && decreasing;
  return {ok, d + "mass gap " + num(mass_gap) + "; worst L1 ratio per halving " + num(worst_ratio) + " (bound 0.9)"};
}

Outcome ito_identity() {
  const auto bm = CoefficientModel::preset("bm1d");
  const MollifiedGreen Ge(GreenFunction(bm, 1.0), 0.2);
  std::vector<double> rms;
  std::string d;
  for (int S : {4, 8, 16}) {
    const auto res = sample_ito_residuals(bm1d_spec(8, S, 1.0, 108), Ge, Vec::Zero(1), 1.0, 2000, g_threads);
    double s = 0.0;
    for (double r : res) s += r * r;
    rms.push_back(std::sqrt(s / double(res.size())));
    d += "S=" + std::to_string(S) + " rms " + num(rms.back()) + "; ";
  }
  const double r1 = rms[1] / rms[0], r2 = rms[2] / rms[1];
  return {r1 <= 0.7 && r2 <= 0.7, d + "ratios " + num(r1) + ", " + num(r2) + " (bound 0.7)"};
}

double extrapolate(double a1, double h1, double a2, double h2, double p) {
  const double w1 = std::pow(h1, p), w2 = std::pow(h2, p);
  return (w1 * a2 - w2 * a1) / (w1 - w2);
}

Outcome eps_cauchy() {
  EpsStudyOptions o;
  o.sim = bm1d_spec(8, 8, 1.0, 109);
  o.replicates = 1000;
  o.u = Vec::Zero(1);
  o.eps = {0.4, 0.2, 0.1, 0.05};
  o.ball_radii = {0.2, 0.1};
  o.threads = g_threads;
  const auto res = epsilon_convergence_study(o);
  const std::size_t R = res.replicates.size();
  bool ok = true;
  std::string d = "E|dLambda|^2";
  for (const auto& row : res.rows) d += " " + num(row.l2);
  d += "; ";
  for (std::size_t i = 0; i + 2 < res.eps.size(); ++i) {
    std::vector<double> diff(R);
    for (std::size_t r = 0; r < R; ++r) {
      const double a = res.lambda_value(r, i) - res.lambda_value(r, i + 1);
      const double b = res.lambda_value(r, i + 1) - res.lambda_value(r, i + 2);
      diff[r] = b * b - a * a;
    }
    const auto m = mean_se(diff);
    ok = ok && m.mean < 2 * m.se;
  }
  std::vector<double> gap(R);
  for (std::size_t r = 0; r < R; ++r) {
    const auto& rep = res.replicates[r];
    // small-ball occupation is first order in h, Lambda_eps second order in eps
    const double ball = extrapolate(rep.ball[0], 0.2, rep.ball[1], 0.1, 1.0) - rep.exact_double_point;
    const double lam = extrapolate(res.lambda_value(r, 2), 0.1, res.lambda_value(r, 3), 0.05, 2.0);
    gap[r] = lam - ball;
  }
  const auto g = mean_se(gap);
  const double z = g.mean / g.se;
  ok = ok && std::abs(z) <= 5;
  return {ok, d + "limit minus small-ball estimate " + num(g.mean) + " +- " + num(g.se) + " (z " + num(z) +
                  ", bound 5)"};
}

Outcome singularity_diagnostic() {
  EpsStudyOptions o;
  o.sim.model = CoefficientModel::preset("flow3d");
  o.sim.mu0 = InitialMeasureSpec::point_mass(Vec::Zero(3));
  o.sim.n = 8;
  o.sim.substeps = 8;
  o.sim.horizon = 1.0;
  o.sim.seed = 110;
  o.replicates = 1000;
  o.u = Vec::Zero(3);
  o.eps = {0.4, 0.2, 0.1, 0.05};
  o.threads = g_threads;
  const auto res = epsilon_convergence_study(o);
  bool increasing = true;
  std::string d = "mean double points";
  for (std::size_t i = 0; i < res.eps.size(); ++i) {
    d += " " + num(res.mean_double_point[i].mean);
    if (i > 0) increasing = increasing && res.mean_double_point[i].mean > res.mean_double_point[i - 1].mean;
  }
  double lo = 1e300, hi = 0.0;
  d += "; Var Lambda_eps";
  for (const auto& v : res.variance) {
    lo = std::min(lo, v.variance);
    hi = std::max(hi, v.variance);
    d += " " + num(v.variance);
  }
  return {increasing && hi <= 2 * lo, d + "; max/min " + num(hi / lo) + " (bound 2)"};
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::string only;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--strict")) strict = true;
    else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) only = argv[++i];
  }
  g_threads = resolve_threads(0);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"mass_law", mass_law},
      {"offspring_law", offspring_law},
      {"martingale_problem", martingale_problem},
      {"moment_oracle_golden", moment_oracle_golden},
      {"oracle_vs_simulation", oracle_vs_simulation},
      {"genealogy", genealogy},
      {"green_function", green_function},
      {"ito_identity", ito_identity},
      {"eps_cauchy", eps_cauchy},
      {"singularity_diagnostic", singularity_diagnostic},
  };
  int passed = 0, failed = 0, known = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && only != name) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (out.pass ? "PASS " : "FAIL ") << name << "  " << out.detail << "  [" << num(secs) << " s]"
              << std::endl;
    if (out.pass) {
      ++passed;
    } else if (!strict && kKnownDeviations.count(name)) {
      ++known;
    } else {
      ++failed;
    }
  }
  std::cout << passed << " passed, " << failed + known << " failed";
  if (known) std::cout << " (" << known << " known deviation, documented)";
  std::cout << std::endl;
  return failed == 0 ? 0 : 1;
}
