#pragma once

#include "flowsilt/config.hpp"
#include "flowsilt/green.hpp"
#include "flowsilt/model.hpp"
#include "flowsilt/particles.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace flowsilt {

// One comparison.  Statistical checks pass when |z| <= threshold; property checks
// leave z and threshold NaN and carry their own predicate in `pass`.
struct Check {
  std::string suite;
  std::string name;
  double estimate = 0.0;
  double oracle = 0.0;
  double se = 0.0;
  double z = 0.0;
  double threshold = 0.0;
  bool pass = false;
  double runtime = 0.0;  // seconds
  std::string note;
};

Check z_check(std::string suite, std::string name, double estimate, double oracle, double se, double threshold);
Check predicate_check(std::string suite, std::string name, double estimate, double oracle, bool pass,
                      std::string note = {});

struct StatReport {
  std::vector<Check> checks;
  std::string config_hash;
  std::uint64_t seed = 0;
  bool all_passed() const;
};

// ---- sampling drivers; replicate r always uses stream r of spec.seed ----

std::vector<double> sample_terminal_mass(const SimSpec& spec, int replicates, int threads = 0);

struct OffspringTally {
  std::uint64_t events = 0;   // branching decisions observed
  std::uint64_t doubled = 0;  // of which produced two offspring
};
OffspringTally sample_offspring(const SimSpec& spec, int replicates, int threads = 0);

struct MartingaleSample {
  std::vector<double> z;        // Z_T(f) per replicate
  std::vector<double> bracket;  // bracket integral per replicate
};
MartingaleSample sample_martingale(const SimSpec& spec, const TestFunction& f, int replicates, int threads = 0);

// out[r][i] = <phis[i], mu_{times[i]}> in replicate r.  Times are snapped to the sub-step grid.
std::vector<std::vector<double>> sample_test_integrals(const SimSpec& spec, const std::vector<TestFunction>& phis,
                                                       const std::vector<double>& times, int replicates,
                                                       int threads = 0);

// Decomposition residual of one mollifier on full-resolution trajectories.
std::vector<double> sample_ito_residuals(const SimSpec& spec, const MollifiedGreen& kernel, const Vec& u, double T,
                                         int replicates, int threads = 0);

// Gaussian bumps of unit width at spread-out centres, the default moment battery.
std::vector<TestFunction> gaussian_battery(int dim, int count);

// ---- orchestration ----

struct RunOptions {
  int threads = 0;
  std::string out_dir;  // empty: no files
};

// Runs one suite.  Suite parameters override sim settings ("n", "substeps", "horizon",
// "replicates") and may swap "model" / "mu0"; unknown keys raise ConfigError.
std::vector<Check> run_suite(const ExperimentConfig& config, const SuiteSpec& suite, const RunOptions& opts);

// Validates the model, runs all suites in order and writes report.md and checks.csv
// (plus per-suite CSVs) to opts.out_dir when set.
StatReport run_experiment(const ExperimentConfig& config, const RunOptions& opts);

// checks.csv: suite,check,estimate,oracle,se,z,threshold,pass,note.  Runtimes are
// kept out of the CSV so replays give identical bytes.
void write_checks_csv(std::ostream& os, const StatReport& report);
void write_report_markdown(std::ostream& os, const StatReport& report, const ExperimentConfig& config);

}  // namespace flowsilt
