#include "flowsilt/config.hpp"
#include "flowsilt/error.hpp"
#include "flowsilt/harness.hpp"
#include "flowsilt/moments.hpp"
#include "flowsilt/parallel.hpp"
#include "flowsilt/silt.hpp"
#include "flowsilt/stats.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace flowsilt;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
};

ExperimentConfig load(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  return load_config(g.config, g.seed);
}

std::string out_dir(const Globals& g, const ExperimentConfig& c) {
  const std::string dir = g.out.empty() ? c.output : g.out;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  const auto path = (std::filesystem::path(dir) / name).string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  return f;
}

SimSpec sim_of(const ExperimentConfig& c) { return c.sim_spec(); }

int cmd_validate(const Globals& g) {
  const auto c = load(g);
  const auto grid = default_probe_grid(c.model, c.mu0, c.sim.horizon);
  const auto rep = validate_model(c.model, grid, &c.mu0);
  std::cout << rep.summary() << "\n";
  std::cout << "config hash " << c.hash() << ", seed " << c.sim.seed << ", " << c.suites.size() << " suites\n";
  return rep.passed ? 0 : 1;
}

int cmd_simulate(const Globals& g, int summaries, bool dump) {
  const auto c = load(g);
  const auto dir = out_dir(g, c);
  const SimSpec spec = sim_of(c);
  const auto mass = sample_terminal_mass(spec, c.sim.replicates, resolve_threads(g.threads));
  {
    auto f = open_out(dir, "terminal_mass.csv");
    f << "replicate,mass\n";
    for (std::size_t r = 0; r < mass.size(); ++r) f << r << ',' << format_double(mass[r]) << '\n';
  }
  const int d = c.model.dim();
  const auto tests = gaussian_battery(d, 2);
  const std::vector<std::string> names{"bump0", "bump1"};
  for (int r = 0; r < std::min(summaries, c.sim.replicates); ++r) {
    const auto traj = simulate_trajectory(spec, std::uint64_t(r), spec.substeps);
    auto f = open_out(dir, "replicate_" + std::to_string(r) + ".csv");
    write_replicate_summary_csv(f, traj, tests, names);
    if (dump) {
      auto b = open_out(dir, "replicate_" + std::to_string(r) + ".bin");
      write_trajectory_dump(traj, b);
    }
  }
  const auto m = mean_se(mass);
  std::cout << "replicates " << mass.size() << ", mean terminal mass " << format_double(m.mean) << " +- "
            << format_double(m.se) << "\n";
  return 0;
}

int cmd_moments(const Globals& g, int order, std::vector<double> times, bool unit) {
  const auto c = load(g);
  if (order < 1 || order > 4) throw ArgumentError("--order must lie in 1..4");
  if (times.empty()) times.assign(std::size_t(order), c.sim.horizon);
  if (int(times.size()) != order) throw ArgumentError("--times needs one value per order");
  const auto phis = unit ? std::vector<TestFunction>(std::size_t(order), TestFunction::one())
                         : gaussian_battery(c.model.dim(), order);
  MomentOptions mo;
  mo.threads = resolve_threads(g.threads);
  const auto res = mixed_moment(c.model, phis, times, c.mu0, mo);
  const auto text = dump_terms(moment_formula(order), &res);
  std::cout << text;
  std::cout << "moment " << format_double(res.value) << " (error estimate " << format_double(res.error) << ", "
            << res.nodes << " nodes)\n";
  if (!g.out.empty()) {
    auto f = open_out(out_dir(g, c), "moment_order" + std::to_string(order) + ".txt");
    f << text << "value " << format_double(res.value) << "\nerror " << format_double(res.error) << '\n';
  }
  return 0;
}

EpsStudyOptions study_options(const Globals& g, const ExperimentConfig& c) {
  EpsStudyOptions eo;
  eo.sim = sim_of(c);
  eo.replicates = c.sim.replicates;
  eo.lambda = c.silt.lambda;
  eo.u = c.silt.u;
  eo.T = c.silt.T;
  eo.eps = c.silt.eps;
  eo.ball_radii = c.silt.ball_radii;
  eo.threads = resolve_threads(g.threads);
  return eo;
}

int cmd_silt(const Globals& g) {
  const auto c = load(g);
  const auto dir = out_dir(g, c);
  auto eo = study_options(g, c);
  eo.ball_radii.clear();
  const auto res = epsilon_convergence_study(eo);
  auto f = open_out(dir, "silt_components.csv");
  write_silt_components_csv(f, res);
  for (std::size_t i = 0; i < res.eps.size(); ++i)
    std::cout << "eps " << format_double(res.eps[i]) << "  mean Lambda " << format_double(res.mean_lambda[i].mean)
              << " +- " << format_double(res.mean_lambda[i].se) << "  mean double points "
              << format_double(res.mean_double_point[i].mean) << "\n";
  return 0;
}

int cmd_eps_study(const Globals& g) {
  const auto c = load(g);
  const auto dir = out_dir(g, c);
  const auto res = epsilon_convergence_study(study_options(g, c));
  {
    auto f = open_out(dir, "silt_components.csv");
    write_silt_components_csv(f, res);
  }
  auto f = open_out(dir, "eps_study.csv");
  write_eps_study_csv(f, res);
  write_eps_study_csv(std::cout, res);
  return 0;
}

int cmd_report(const Globals& g) {
  const auto c = load(g);
  RunOptions ro;
  ro.threads = resolve_threads(g.threads);
  ro.out_dir = out_dir(g, c);
  const auto rep = run_experiment(c, ro);
  for (const auto& ch : rep.checks)
    std::cout << (ch.pass ? "PASS " : "FAIL ") << ch.suite << ": " << ch.name << "  estimate "
              << format_double(ch.estimate) << "  oracle " << format_double(ch.oracle) << "\n";
  std::cout << rep.checks.size() << " checks, config hash " << rep.config_hash << ", seed " << rep.seed
            << ", written to " << ro.out_dir << "\n";
  return rep.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching particle simulator, moment oracle and self-intersection estimators"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto add_globals = [&](CLI::App* sub) {
    sub->add_option("--config", g.config, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", g.out, "output directory (default: config 'output')");
    sub->add_option("--threads", g.threads, "worker threads (default: FLOWSILT_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
  };

  auto* validate = app.add_subcommand("validate", "check the configuration and the model assumptions");
  auto* simulate = app.add_subcommand("simulate", "run replicates, write terminal masses and per-replicate CSVs");
  int summaries = 1;
  bool dump = false;
  simulate->add_option("--summaries", summaries, "replicates with a time-series CSV")->check(CLI::NonNegativeNumber);
  simulate->add_flag("--dump", dump, "also write binary trajectory dumps");
  auto* moments = app.add_subcommand("moments", "evaluate a mixed moment with the Gaussian oracle");
  int order = 2;
  std::vector<double> times;
  bool unit = false;
  moments->add_option("--order", order, "moment order (1-4)");
  moments->add_option("--times", times, "observation times, one per factor");
  moments->add_flag("--unit", unit, "use unit test functions (mass moments)");
  auto* silt = app.add_subcommand("silt", "per-replicate decomposition components along the eps schedule");
  auto* eps = app.add_subcommand("eps-study", "coupled-seed eps convergence study");
  auto* report = app.add_subcommand("report", "run the configured suites and write the report");
  for (auto* sub : {validate, simulate, moments, silt, eps, report}) add_globals(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (auto* sub : {validate, simulate, moments, silt, eps, report})
    if (*sub && sub->count("--seed")) g.seed = seed;
  if (g.threads == 0) g.threads = resolve_threads(0);

  try {
    if (*validate) return cmd_validate(g);
    if (*simulate) return cmd_simulate(g, summaries, dump);
    if (*moments) return cmd_moments(g, order, times, unit);
    if (*silt) return cmd_silt(g);
    if (*eps) return cmd_eps_study(g);
    if (*report) return cmd_report(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
