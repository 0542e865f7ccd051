#include "flowsilt/harness.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/genealogy.hpp"
#include "flowsilt/moments.hpp"
#include "flowsilt/parallel.hpp"
#include "flowsilt/rng.hpp"
#include "flowsilt/silt.hpp"
#include "flowsilt/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace flowsilt {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double x) { return std::isfinite(x) ? format_double(x) : (std::isnan(x) ? "" : format_double(x)); }

long snap_substep(double t, const SimSpec& spec) {
  const double per_unit = double(spec.n) * spec.substeps;
  const long k = std::lround(t * per_unit);
  if (k < 0 || k > spec.total_substeps()) throw RangeError("time " + format_double(t) + " outside [0, horizon]");
  return k;
}

class OffspringObserver : public FrameObserver {
 public:
  void on_frame(const ReplicaState&, const StepInfo* info) override {
    if (!info || !info->branched) return;
    for (auto o : info->offspring) {
      ++tally.events;
      if (o == 2) ++tally.doubled;
    }
  }
  OffspringTally tally;
};

class IntegralObserver : public FrameObserver {
 public:
  IntegralObserver(const std::vector<TestFunction>& phis, const std::vector<long>& targets, int dim)
      : targets_(targets), values_(phis.size(), 0.0) {
    evals_.reserve(phis.size());
    for (const auto& f : phis) evals_.emplace_back(f, dim);
  }
  void on_frame(const ReplicaState& st, const StepInfo*) override {
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      if (targets_[i] != st.substep) continue;
      std::vector<double> terms(st.size());
      for (std::size_t a = 0; a < st.size(); ++a) terms[a] = evals_[i].value(st.pos.data() + a * std::size_t(st.dim));
      values_[i] = pairwise_sum(terms) / st.n;
    }
  }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<long> targets_;
  std::vector<TestEvaluator> evals_;
  std::vector<double> values_;
};

std::uint64_t suite_seed(std::uint64_t seed, const std::string& suite) { return rng::splitmix64(seed ^ fnv1a64(suite)); }

// Suite parameter view with unknown-key detection.
class SuiteParams {
 public:
  SuiteParams(const ExperimentConfig& cfg, const SuiteSpec& suite, std::initializer_list<const char*> extra)
      : cfg_(cfg), suite_(suite) {
    std::set<std::string> ok{"n", "substeps", "horizon", "replicates", "model", "mu0"};
    ok.insert(extra.begin(), extra.end());
    for (auto it = suite.params.begin(); it != suite.params.end(); ++it)
      if (!ok.count(it.key())) fail(it.key(), "unknown key");
    model_ = cfg.model;
    mu0_ = cfg.mu0;
    if (has("model")) model_ = model_from_json(suite.params["model"], path("model"));
    if (has("mu0")) {
      mu0_ = mu0_from_json(suite.params["mu0"], model_.dim(), path("mu0"));
    } else if (has("model") && mu0_.dim() != model_.dim()) {
      mu0_ = InitialMeasureSpec::point_mass(Vec::Zero(model_.dim()), mu0_.total_mass());
    }
  }

  bool has(const char* key) const { return suite_.params.contains(key); }
  std::string path(const std::string& key) const { return "suites[" + suite_.name + "]." + key; }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config key '" + path(key) + "': " + what);
  }

  double number(const char* key, double fallback, bool positive = true) const {
    if (!has(key)) return fallback;
    const auto& v = suite_.params[key];
    if (!v.is_number()) fail(key, "expected a number");
    const double x = v.get<double>();
    if (positive && !(x > 0.0)) fail(key, "must be positive");
    return x;
  }
  int integer(const char* key, int fallback) const {
    if (!has(key)) return fallback;
    const auto& v = suite_.params[key];
    if (!v.is_number_integer() || v.get<long long>() <= 0 || v.get<long long>() > 2000000000LL)
      fail(key, "must be a positive integer");
    return int(v.get<long long>());
  }
  std::vector<double> list(const char* key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const auto& v = suite_.params[key];
    if (!v.is_array() || v.empty()) fail(key, "expected a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(key, "expected numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  SimSpec sim() const {
    SimSpec s;
    s.model = model_;
    s.mu0 = mu0_;
    s.n = integer("n", cfg_.sim.n);
    s.substeps = integer("substeps", cfg_.sim.substeps);
    s.horizon = number("horizon", cfg_.sim.horizon);
    s.seed = suite_seed(cfg_.sim.seed, suite_.name);
    return s;
  }
  int replicates() const { return integer("replicates", cfg_.sim.replicates); }
  const CoefficientModel& model() const { return model_; }
  const InitialMeasureSpec& mu0() const { return mu0_; }

 private:
  const ExperimentConfig& cfg_;
  const SuiteSpec& suite_;
  CoefficientModel model_ = CoefficientModel::preset("bm1d");
  InitialMeasureSpec mu0_ = InitialMeasureSpec::point_mass(Vec::Zero(1));
};

void write_file(const std::string& dir, const std::string& name, const std::string& body) {
  if (dir.empty()) return;
  const auto path = std::filesystem::path(dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
  if (!out) throw IoError("write failed: " + path.string());
}

double product(const std::vector<double>& v, std::size_t k) {
  double p = 1.0;
  for (std::size_t i = 0; i < k; ++i) p *= v[i];
  return p;
}

// Mass moment oracle: unit test functions only see the total mass.
double mass_moment(const CoefficientModel& model, const InitialMeasureSpec& mu0, int order, double t, int threads) {
  const auto point = InitialMeasureSpec::point_mass(Vec::Zero(model.dim()), mu0.total_mass());
  MomentOptions mo;
  mo.threads = threads;
  return mixed_moment(model, std::vector<TestFunction>(std::size_t(order), TestFunction::one()),
                      std::vector<double>(std::size_t(order), t), point, mo)
      .value;
}

// ---- suites ----

std::vector<Check> suite_mass(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions& o) {
  SuiteParams p(cfg, s, {});
  const SimSpec spec = p.sim();
  const int threads = resolve_threads(o.threads);
  const auto mass = sample_terminal_mass(spec, p.replicates(), threads);
  const auto m = mean_se(mass);
  const auto v = variance_se(mass);
  const double T = spec.horizon, m0 = spec.mu0.total_mass();
  const double second = mass_moment(spec.model, spec.mu0, 2, T, threads);
  std::vector<Check> out;
  out.push_back(z_check("mass", "mean mass at T", m.mean, m0, m.se, cfg.mean_threshold));
  out.push_back(z_check("mass", "variance of mass at T", v.variance, second - m0 * m0, v.se, cfg.moment_threshold));
  std::ostringstream csv;
  csv << "replicate,mass\n";
  for (std::size_t r = 0; r < mass.size(); ++r) csv << r << ',' << format_double(mass[r]) << '\n';
  write_file(o.out_dir, "mass.csv", csv.str());
  return out;
}

std::vector<Check> suite_offspring(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions& o) {
  SuiteParams p(cfg, s, {"max_q", "confidence"});
  const SimSpec spec = p.sim();
  const int max_q = p.integer("max_q", 6);
  const double conf = p.number("confidence", 0.999);
  if (!(conf < 1.0)) p.fail("confidence", "must lie in (0, 1)");
  const auto tally = sample_offspring(spec, p.replicates(), resolve_threads(o.threads));
  if (tally.events == 0) throw SimulationDivergedError("no branching events observed");
  const double phat = double(tally.doubled) / double(tally.events);
  const auto ci = clopper_pearson(tally.doubled, tally.events, conf);
  std::vector<Check> out;
  std::ostringstream csv;
  csv << "q,estimate,ci_lo,ci_hi,oracle\n";
  for (int q = 1; q <= max_q; ++q) {
    const double scale = std::ldexp(1.0, q);  // N in {0, 2}: E N^q = 2^q P(N = 2)
    const double est = scale * phat, lo = scale * ci.lo, hi = scale * ci.hi;
    const double oracle = std::ldexp(1.0, q - 1);
    auto c = predicate_check("offspring", "E N^" + std::to_string(q), est, oracle, lo <= oracle && oracle <= hi,
                             "exact " + format_double(conf) + " interval [" + format_double(lo) + ", " +
                                 format_double(hi) + "], " + std::to_string(tally.events) + " events");
    c.se = scale * std::sqrt(phat * (1.0 - phat) / double(tally.events));
    out.push_back(c);
    csv << q << ',' << format_double(est) << ',' << format_double(lo) << ',' << format_double(hi) << ','
        << format_double(oracle) << '\n';
  }
  write_file(o.out_dir, "offspring.csv", csv.str());
  return out;
}

std::vector<Check> suite_martingale(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions& o) {
  SuiteParams p(cfg, s, {"center", "width", "tolerance"});
  const SimSpec spec = p.sim();
  const int d = spec.model.dim();
  const auto center = p.list("center", std::vector<double>(std::size_t(d), 0.0));
  if (int(center.size()) != d) p.fail("center", "expected " + std::to_string(d) + " entries");
  const double width = p.number("width", 1.0);
  const double tol = p.number("tolerance", 0.10);
  const auto f = TestFunction::gaussian(Eigen::Map<const Vec>(center.data(), d), Mat::Identity(d, d) / (width * width));
  const auto sample = sample_martingale(spec, f, p.replicates(), resolve_threads(o.threads));
  const auto qv = summarize_martingale(sample.z, sample.bracket);
  std::vector<Check> out;
  out.push_back(z_check("martingale", "mean Z_T(f)", qv.mean_z, 0.0, qv.mean_z_se, cfg.mean_threshold));
  const double rel = std::abs(qv.empirical - qv.predicted) / std::abs(qv.predicted);
  auto c = predicate_check("martingale", "E Z_T(f)^2 vs bracket", qv.empirical, qv.predicted, rel <= tol,
                           "relative gap " + format_double(rel) + ", tolerance " + format_double(tol));
  c.se = qv.empirical_se;
  out.push_back(c);
  std::ostringstream csv;
  csv << "replicate,z,bracket\n";
  for (std::size_t r = 0; r < sample.z.size(); ++r)
    csv << r << ',' << format_double(sample.z[r]) << ',' << format_double(sample.bracket[r]) << '\n';
  write_file(o.out_dir, "martingale.csv", csv.str());
  return out;
}

std::vector<Check> suite_moments(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions& o) {
  SuiteParams p(cfg, s, {"times", "orders"});
  const SimSpec spec = p.sim();
  const int threads = resolve_threads(o.threads);
  const auto times = p.list("times", {0.25, 0.5, 0.75, 1.0});
  std::vector<int> orders;
  for (double x : p.list("orders", {1, 2, 3, 4})) {
    if (x != std::floor(x) || x < 1 || x > double(times.size())) p.fail("orders", "orders must be integers in [1, #times]");
    orders.push_back(int(x));
  }
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] < times[i - 1]) p.fail("times", "must be nondecreasing");
  const int d = spec.model.dim();
  auto phis = gaussian_battery(d, int(times.size()));
  auto probe = phis;
  auto probe_times = times;
  probe.push_back(TestFunction::one());
  probe_times.push_back(spec.horizon);
  const auto samples = sample_test_integrals(spec, probe, probe_times, p.replicates(), threads);

  std::vector<Check> out;
  std::ostringstream csv;
  csv << "order,functions,estimate,stderr,oracle,oracle_error\n";
  MomentOptions mo;
  mo.threads = threads;
  for (int k : orders) {
    std::vector<double> prod(samples.size());
    for (std::size_t r = 0; r < samples.size(); ++r) prod[r] = product(samples[r], std::size_t(k));
    const auto m = mean_se(prod);
    const auto oracle = mixed_moment(spec.model, std::vector<TestFunction>(phis.begin(), phis.begin() + k),
                                     std::vector<double>(times.begin(), times.begin() + k), spec.mu0, mo);
    auto c = z_check("moments", "order " + std::to_string(k) + " gaussian", m.mean, oracle.value, m.se,
                     cfg.moment_threshold);
    c.note = "oracle error " + format_double(oracle.error);
    out.push_back(c);
    csv << k << ",gaussian," << format_double(m.mean) << ',' << format_double(m.se) << ','
        << format_double(oracle.value) << ',' << format_double(oracle.error) << '\n';
  }
  std::vector<double> m4(samples.size());
  for (std::size_t r = 0; r < samples.size(); ++r) m4[r] = std::pow(samples[r].back(), 4);
  const auto m = mean_se(m4);
  const double oracle = mass_moment(spec.model, spec.mu0, 4, spec.horizon, threads);
  out.push_back(z_check("moments", "order 4 unit", m.mean, oracle, m.se, cfg.moment_threshold));
  csv << "4,unit," << format_double(m.mean) << ',' << format_double(m.se) << ',' << format_double(oracle) << ",\n";
  write_file(o.out_dir, "moments.csv", csv.str());
  return out;
}

Label random_label(rng::PhiloxEngine& eng, int length) {
  Label l;
  l.root = 1 + eng() % 2u;
  l.bits.resize(std::size_t(length));
  for (auto& b : l.bits) b = std::uint8_t(eng() & 1u);
  return l;
}

std::vector<Check> suite_genealogy(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions&) {
  SuiteParams p(cfg, s, {"tuples", "max_generation"});
  const int tuples = p.integer("tuples", 100000);
  const int max_gen = p.integer("max_generation", 8);
  rng::PhiloxEngine eng(suite_seed(cfg.sim.seed, "genealogy"), 0);
  std::size_t agree = 0;
  std::map<std::string, std::size_t> seen;
  for (int t = 0; t < tuples; ++t) {
    const int size = 3 + int(eng() % 2u);
    const int len = 1 + int(eng() % std::uint32_t(max_gen));
    std::vector<Label> labels;
    while (int(labels.size()) < size) {
      Label l = random_label(eng, len);
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(std::move(l));
    }
    const auto a = classify_topology(labels);
    const auto b = classify_topology_bruteforce(labels);
    if (a == b) ++agree;
    ++seen[to_string(a.topology)];
  }
  std::vector<Check> out;
  std::string mix;
  for (const auto& [k, v] : seen) mix += (mix.empty() ? "" : " ") + k + ":" + std::to_string(v);
  out.push_back(predicate_check("genealogy", "classifier vs brute force", double(agree), double(tuples),
                                agree == std::size_t(tuples), mix));

  // Labels of a simulated population.
  SimSpec spec = p.sim();
  spec.track_genealogy = true;
  std::size_t sim_total = 0, sim_agree = 0;
  for (int r = 0; r < 16 && sim_total < 2000; ++r) {
    const auto st = simulate(spec, std::uint64_t(r));
    const auto labels = st.labels();
    if (labels.size() < 4) continue;
    for (std::size_t q = 0; q < 200 && sim_total < 2000; ++q) {
      std::vector<Label> pick;
      std::set<std::size_t> idx;
      while (idx.size() < 4) idx.insert(eng() % labels.size());
      for (auto i : idx) pick.push_back(labels[i]);
      ++sim_total;
      if (classify_topology(pick) == classify_topology_bruteforce(pick)) ++sim_agree;
    }
  }
  out.push_back(predicate_check("genealogy", "classifier on simulated labels", double(sim_agree), double(sim_total),
                                sim_agree == sim_total));

  const std::pair<Topology, long> counts[] = {
      {Topology::II, 12}, {Topology::III, 12}, {Topology::IV, 48}, {Topology::VA, 12}, {Topology::VB, 48}};
  for (const auto& [t, n] : counts) {
    const long got = arrangement_count(t);
    out.push_back(predicate_check("genealogy", "arrangements " + to_string(t), double(got), double(n), got == n));
  }
  return out;
}

std::vector<Check> suite_green(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions& o) {
  SuiteParams p(cfg, s, {"lambda", "eps", "tolerance", "ratio"});
  const double lambda = p.number("lambda", cfg.silt.lambda);
  const auto eps = p.list("eps", cfg.silt.eps);
  const double tol = p.number("tolerance", 1e-8);
  const double ratio_max = p.number("ratio", 0.9);
  const auto& model = p.model();
  const int d = model.dim();
  const GreenFunction G(model, lambda);
  std::vector<Check> out;

  double worst = 0.0;
  const Vec u = Vec::Zero(d);
  for (int i = 1; i <= 40; ++i) {
    Vec x = Vec::Zero(d);
    x[0] = 0.1 * i;
    if (d > 1) x[1] = 0.03 * i;
    const double a = G(x), b = resolvent_green_quadrature(model, lambda, u, x);
    worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
  }
  out.push_back(predicate_check("green", "G vs time quadrature", worst, 0.0, worst <= tol,
                                "max scaled gap over 40 points, tolerance " + format_double(tol)));

  std::ostringstream csv;
  csv << "eps,integral,l1_distance\n";
  std::vector<double> l1;
  for (double e : eps) {
    const MollifiedGreen Ge(G, e);
    const double I = Ge.integral();
    l1.push_back(Ge.l1_distance_to_base());
    out.push_back(predicate_check("green", "integral at eps=" + format_double(e), I, 1.0 / lambda,
                                  std::abs(I - 1.0 / lambda) <= tol));
    csv << format_double(e) << ',' << format_double(I) << ',' << format_double(l1.back()) << '\n';
  }
  for (std::size_t i = 1; i < l1.size(); ++i) {
    const double r = l1[i] / l1[i - 1];
    out.push_back(predicate_check("green",
                                  "L1 ratio eps=" + format_double(eps[i]) + " vs " + format_double(eps[i - 1]), r,
                                  ratio_max, r <= ratio_max));
  }
  write_file(o.out_dir, "green.csv", csv.str());
  return out;
}

std::vector<Check> suite_ito(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions& o) {
  SuiteParams p(cfg, s, {"eps", "levels", "lambda", "T", "reduction"});
  SimSpec spec = p.sim();
  const double e = p.number("eps", 0.2);
  const int levels = p.integer("levels", 3);
  const double lambda = p.number("lambda", cfg.silt.lambda);
  const double T = p.number("T", std::min(cfg.silt.T, spec.horizon));
  const double reduction = p.number("reduction", 0.30);
  if (levels < 2) p.fail("levels", "needs at least 2");
  Vec u = cfg.silt.u;
  if (u.size() != spec.model.dim()) u = Vec::Zero(spec.model.dim());
  const GreenFunction G(spec.model, lambda);
  const MollifiedGreen Ge(G, e);
  std::vector<double> rms;
  std::ostringstream csv;
  csv << "substeps,rms_residual,replicates\n";
  const int base = spec.substeps;
  for (int l = 0; l < levels; ++l) {
    spec.substeps = base << l;
    const auto res = sample_ito_residuals(spec, Ge, u, T, p.replicates(), resolve_threads(o.threads));
    std::vector<double> sq(res.size());
    for (std::size_t i = 0; i < res.size(); ++i) sq[i] = res[i] * res[i];
    rms.push_back(std::sqrt(pairwise_sum(sq) / double(sq.size())));
    csv << spec.substeps << ',' << format_double(rms.back()) << ',' << res.size() << '\n';
  }
  std::vector<Check> out;
  for (int l = 1; l < levels; ++l) {
    const double r = rms[std::size_t(l)] / rms[std::size_t(l - 1)];
    out.push_back(predicate_check("ito", "rms residual S=" + std::to_string(base << l) + " vs " +
                                             std::to_string(base << (l - 1)),
                                  r, 1.0 - reduction, r <= 1.0 - reduction,
                                  "rms " + format_double(rms[std::size_t(l)])));
  }
  write_file(o.out_dir, "ito.csv", csv.str());
  return out;
}

EpsStudyResult run_eps_study(const ExperimentConfig& cfg, const SuiteParams& p, const RunOptions& o,
                             std::vector<double> ball_radii) {
  EpsStudyOptions eo;
  eo.sim = p.sim();
  eo.replicates = p.replicates();
  eo.lambda = p.number("lambda", cfg.silt.lambda);
  eo.T = p.number("T", std::min(cfg.silt.T, eo.sim.horizon));
  eo.eps = p.list("eps", cfg.silt.eps);
  for (std::size_t i = 1; i < eo.eps.size(); ++i)
    if (!(eo.eps[i] < eo.eps[i - 1])) p.fail("eps", "schedule must be strictly decreasing");
  if (eo.eps.size() < 3) p.fail("eps", "needs at least 3 values");
  eo.u = cfg.silt.u.size() == eo.sim.model.dim() ? cfg.silt.u : Vec::Zero(eo.sim.model.dim());
  eo.ball_radii = std::move(ball_radii);
  eo.threads = resolve_threads(o.threads);
  return epsilon_convergence_study(eo);
}

void write_study_csvs(const RunOptions& o, const std::string& prefix, const EpsStudyResult& res) {
  if (o.out_dir.empty()) return;
  std::ostringstream a, b;
  write_silt_components_csv(a, res);
  write_eps_study_csv(b, res);
  write_file(o.out_dir, prefix + "silt_components.csv", a.str());
  write_file(o.out_dir, prefix + "eps_study.csv", b.str());
}

// Extrapolates a(h) = a0 + C h^p from the values at h1 > h2.
double richardson(double a1, double h1, double a2, double h2, double p) {
  const double w1 = std::pow(h1, p), w2 = std::pow(h2, p);
  return (w1 * a2 - w2 * a1) / (w1 - w2);
}

std::vector<Check> suite_eps(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions& o) {
  SuiteParams p(cfg, s, {"lambda", "T", "eps", "ball_radii", "margin"});
  const auto radii = p.list("ball_radii", cfg.silt.ball_radii);
  const double margin = p.number("margin", 2.0);
  const auto res = run_eps_study(cfg, p, o, radii);
  write_study_csvs(o, "", res);
  const std::size_t R = res.replicates.size(), K = res.eps.size();
  std::vector<Check> out;

  // Consecutive distances, compared pairwise on the same replicates.
  for (std::size_t i = 0; i + 2 < K; ++i) {
    std::vector<double> diff(R);
    for (std::size_t r = 0; r < R; ++r) {
      const double a = res.lambda_value(r, i) - res.lambda_value(r, i + 1);
      const double b = res.lambda_value(r, i + 1) - res.lambda_value(r, i + 2);
      diff[r] = a * a - b * b;
    }
    const auto m = mean_se(diff);
    const double z = m.se > 0 ? m.mean / m.se : kNaN;
    // Passes when the later distance is below its predecessor plus `margin` paired SE.
    Check c = predicate_check("eps",
                              "L2 step " + format_double(res.eps[i + 1]) + "/" + format_double(res.eps[i + 2]) +
                                  " below " + format_double(res.eps[i]) + "/" + format_double(res.eps[i + 1]),
                              res.rows[i + 1].l2, res.rows[i].l2, m.mean + margin * m.se > 0.0,
                              "mean squared distances; decrease at z " + format_double(z));
    c.se = m.se;
    c.z = z;
    c.threshold = margin;
    out.push_back(c);
  }

  const auto& model = p.model();
  if (model.dim() == 1 && radii.size() >= 2) {
    // Limits: ball estimator is first order in h, the eps family second order.
    const std::size_t hb = radii.size() - 1;
    std::vector<double> gap(R);
    for (std::size_t r = 0; r < R; ++r) {
      const auto& rep = res.replicates[r];
      const double ball = richardson(rep.ball[hb - 1], radii[hb - 1], rep.ball[hb], radii[hb], 1.0);
      const double lam = richardson(res.lambda_value(r, K - 2), res.eps[K - 2], res.lambda_value(r, K - 1),
                                    res.eps[K - 1], 2.0);
      gap[r] = lam - (ball - rep.exact_double_point);
    }
    const auto m = mean_se(gap);
    double lam_mean = 0.0;
    for (std::size_t r = 0; r < R; ++r)
      lam_mean += richardson(res.lambda_value(r, K - 2), res.eps[K - 2], res.lambda_value(r, K - 1), res.eps[K - 1], 2.0);
    lam_mean /= double(R);
    auto c = z_check("eps", "limit vs small-ball occupation", lam_mean, lam_mean - m.mean, m.se, cfg.moment_threshold);
    c.note = "paired differences over " + std::to_string(R) + " replicates";
    out.push_back(c);
  }
  return out;
}

std::vector<Check> suite_singularity(const ExperimentConfig& cfg, const SuiteSpec& s, const RunOptions& o) {
  SuiteParams p(cfg, s, {"lambda", "T", "eps", "band"});
  const double band = p.number("band", 2.0);
  const auto res = run_eps_study(cfg, p, o, {});
  write_study_csvs(o, "singularity_", res);
  std::vector<Check> out;
  const std::size_t K = res.eps.size();
  for (std::size_t i = 1; i < K; ++i) {
    const auto& a = res.mean_double_point[i - 1];
    const auto& b = res.mean_double_point[i];
    auto c = predicate_check("singularity", "double points eps=" + format_double(res.eps[i]) + " above " +
                                                format_double(res.eps[i - 1]),
                             b.mean, a.mean, b.mean > a.mean);
    c.se = b.se;
    out.push_back(c);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::string vs;
  for (const auto& v : res.variance) {
    lo = std::min(lo, v.variance);
    hi = std::max(hi, v.variance);
    vs += (vs.empty() ? "" : " ") + format_double(v.variance);
  }
  out.push_back(predicate_check("singularity", "variance band of Lambda_eps", hi / lo, band, hi <= band * lo,
                                "variances " + vs));
  return out;
}

}  // namespace

Check z_check(std::string suite, std::string name, double estimate, double oracle, double se, double threshold) {
  Check c;
  c.suite = std::move(suite);
  c.name = std::move(name);
  c.estimate = estimate;
  c.oracle = oracle;
  c.se = se;
  c.threshold = threshold;
  if (se > 0.0) {
    c.z = (estimate - oracle) / se;
  } else {
    c.z = estimate == oracle ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), estimate - oracle);
  }
  c.pass = std::abs(c.z) <= threshold;
  return c;
}

Check predicate_check(std::string suite, std::string name, double estimate, double oracle, bool pass, std::string note) {
  Check c;
  c.suite = std::move(suite);
  c.name = std::move(name);
  c.estimate = estimate;
  c.oracle = oracle;
  c.se = kNaN;
  c.z = kNaN;
  c.threshold = kNaN;
  c.pass = pass;
  c.note = std::move(note);
  return c;
}

bool StatReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::vector<double> sample_terminal_mass(const SimSpec& spec, int replicates, int threads) {
  return parallel_map(std::size_t(replicates), resolve_threads(threads),
                      [&](std::size_t r) { return simulate(spec, r).mass(); });
}

OffspringTally sample_offspring(const SimSpec& spec, int replicates, int threads) {
  const auto tallies = parallel_map(std::size_t(replicates), resolve_threads(threads), [&](std::size_t r) {
    OffspringObserver obs;
    simulate(spec, r, &obs);
    return obs.tally;
  });
  OffspringTally total;
  for (const auto& t : tallies) {
    total.events += t.events;
    total.doubled += t.doubled;
  }
  return total;
}

MartingaleSample sample_martingale(const SimSpec& spec, const TestFunction& f, int replicates, int threads) {
  const auto pairs = parallel_map(std::size_t(replicates), resolve_threads(threads), [&](std::size_t r) {
    MartingaleAccumulator acc(spec.model, f);
    simulate(spec, r, &acc);
    return std::pair{acc.z(), acc.bracket()};
  });
  MartingaleSample out;
  for (const auto& [z, b] : pairs) {
    out.z.push_back(z);
    out.bracket.push_back(b);
  }
  return out;
}

std::vector<std::vector<double>> sample_test_integrals(const SimSpec& spec, const std::vector<TestFunction>& phis,
                                                       const std::vector<double>& times, int replicates, int threads) {
  if (phis.size() != times.size()) throw ArgumentError("one time per test function required");
  std::vector<long> targets;
  for (double t : times) targets.push_back(snap_substep(t, spec));
  return parallel_map(std::size_t(replicates), resolve_threads(threads), [&](std::size_t r) {
    IntegralObserver obs(phis, targets, spec.model.dim());
    simulate(spec, r, &obs);
    return obs.values();
  });
}

std::vector<double> sample_ito_residuals(const SimSpec& spec, const MollifiedGreen& kernel, const Vec& u, double T,
                                         int replicates, int threads) {
  return parallel_map(std::size_t(replicates), resolve_threads(threads), [&](std::size_t r) {
    const auto traj = simulate_trajectory(spec, r, 1);
    return tanaka_decomposition(traj, kernel, spec.model, u, T).ito_residual;
  });
}

std::vector<TestFunction> gaussian_battery(int dim, int count) {
  static const double offsets[] = {0.0, 0.5, -0.5, 1.0, -1.0, 1.5};
  std::vector<TestFunction> out;
  for (int i = 0; i < count; ++i) {
    Vec c = Vec::Constant(dim, offsets[i % 6]);
    out.push_back(TestFunction::gaussian(c, Mat::Identity(dim, dim)));
  }
  return out;
}

std::vector<Check> run_suite(const ExperimentConfig& config, const SuiteSpec& suite, const RunOptions& opts) {
  using Fn = std::vector<Check> (*)(const ExperimentConfig&, const SuiteSpec&, const RunOptions&);
  static const std::map<std::string, Fn> table{
      {"mass", suite_mass},   {"offspring", suite_offspring}, {"martingale", suite_martingale},
      {"moments", suite_moments}, {"genealogy", suite_genealogy}, {"green", suite_green},
      {"ito", suite_ito},     {"eps", suite_eps},             {"singularity", suite_singularity}};
  const auto it = table.find(suite.name);
  if (it == table.end()) throw ConfigError("unknown suite '" + suite.name + "'");
  const auto t0 = std::chrono::steady_clock::now();
  auto checks = it->second(config, suite, opts);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& c : checks) c.runtime = dt / double(checks.size());
  return checks;
}

StatReport run_experiment(const ExperimentConfig& config, const RunOptions& opts) {
  const auto grid = default_probe_grid(config.model, config.mu0, config.sim.horizon);
  require_valid(validate_model(config.model, grid, &config.mu0));

  if (!opts.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + opts.out_dir + ": " + ec.message());
  }
  StatReport report;
  report.config_hash = config.hash();
  report.seed = config.sim.seed;
  for (const auto& suite : config.suites) {
    try {
      auto checks = run_suite(config, suite, opts);
      report.checks.insert(report.checks.end(), checks.begin(), checks.end());
    } catch (const ConfigError&) {
      throw;
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      report.checks.push_back(predicate_check(suite.name, "suite completed", 0.0, 1.0, false, e.what()));
    }
  }
  if (!opts.out_dir.empty()) {
    std::ostringstream csv, md;
    write_checks_csv(csv, report);
    write_report_markdown(md, report, config);
    write_file(opts.out_dir, "checks.csv", csv.str());
    write_file(opts.out_dir, "report.md", md.str());
  }
  return report;
}

namespace {
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}
}  // namespace

void write_checks_csv(std::ostream& os, const StatReport& report) {
  os << "# config_hash=" << report.config_hash << " seed=" << report.seed << '\n';
  os << "suite,check,estimate,oracle,se,z,threshold,pass,note\n";
  for (const auto& c : report.checks) {
    os << csv_field(c.suite) << ',' << csv_field(c.name) << ',' << fmt(c.estimate) << ',' << fmt(c.oracle) << ','
       << fmt(c.se) << ',' << fmt(c.z) << ',' << fmt(c.threshold) << ',' << (c.pass ? "PASS" : "FAIL") << ','
       << csv_field(c.note) << '\n';
  }
}

void write_report_markdown(std::ostream& os, const StatReport& report, const ExperimentConfig& config) {
  std::size_t failed = 0;
  for (const auto& c : report.checks) failed += c.pass ? 0 : 1;
  os << "# flowsilt report\n\n";
  os << "- config hash: `" << report.config_hash << "`\n";
  os << "- seed: " << report.seed << "\n";
  os << "- checks: " << report.checks.size() << ", failed: " << failed << "\n";
  os << "- replay: save the configuration below and run `flowsilt report --config <file> --seed " << report.seed
     << "`\n\n";
  if (report.checks.empty()) {
    os << "No suites requested; configuration validated.\n\n";
  } else {
    os << "| suite | check | estimate | oracle | se | z | threshold | result | runtime (s) | note |\n";
    os << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : report.checks) {
      char rt[32];
      std::snprintf(rt, sizeof rt, "%.3f", c.runtime);
      os << "| " << c.suite << " | " << c.name << " | " << fmt(c.estimate) << " | " << fmt(c.oracle) << " | "
         << fmt(c.se) << " | " << fmt(c.z) << " | " << fmt(c.threshold) << " | "
         << (c.pass ? "PASS" : "**FAIL**") << " | " << rt << " | " << c.note << " |\n";
    }
    os << '\n';
  }
  os << "## Configuration\n\n```json\n" << config.to_json().dump(2) << "\n```\n";
}

}  // namespace flowsilt
