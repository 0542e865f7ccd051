#pragma once

#include "flowsilt/genealogy.hpp"
#include "flowsilt/model.hpp"
#include "flowsilt/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace flowsilt {

// Atoms of weight 1/n.  Positions are stored flat, `dim` values per atom.
struct AtomicMeasure {
  int dim = 1;
  double time = 0.0;
  double weight = 1.0;
  std::vector<double> positions;

  std::size_t size() const { return dim > 0 ? positions.size() / static_cast<std::size_t>(dim) : 0; }
  double mass() const { return weight * static_cast<double>(size()); }
  const double* atom(std::size_t i) const { return positions.data() + i * static_cast<std::size_t>(dim); }
};

double integrate_test(const AtomicMeasure& measure, const TestFunction& f);

// sum_a sum_b w_a w_b f(x_a - y_b - u), with a from mu_s and b from mu_t.
double pair_integrate(const AtomicMeasure& mu_s, const AtomicMeasure& mu_t, const TestFunction& f, const Vec& u);

// Allocation-free evaluation of a test function on raw coordinates.
class TestEvaluator {
 public:
  TestEvaluator(const TestFunction& f, int dim);
  double value(const double* x) const;
  // Returns f(x); writes grad f(x) to `grad` and 1/2 tr(A hess f(x)) to `gen`.
  // `a` is a d x d row-major matrix.
  double value_grad_gen(const double* x, const double* a, double* grad, double* gen) const;

 private:
  const TestFunction* f_;
  int dim_;
  int kind_;  // 0 bump, 1 one, 2 callable
  std::vector<double> center_, prec_;
  double amp_ = 1.0;
};

struct SimSpec {
  CoefficientModel model = CoefficientModel::preset("bm1d");
  InitialMeasureSpec mu0 = InitialMeasureSpec::point_mass(Vec::Zero(1));
  int n = 100;
  int substeps = 4;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  bool track_genealogy = false;

  long total_substeps() const;
  double dt_sub() const { return 1.0 / (double(n) * substeps); }
};

// Live population of one replicate.  Dead particles are compacted out at every grid step.
struct ReplicaState {
  int dim = 1;
  int n = 1;
  int substeps = 1;
  long substep = 0;  // global sub-step index; time = substep / (n * substeps)
  int step = 0;      // grid index k of the current branching interval
  std::vector<double> pos;
  std::vector<std::uint64_t> hash;
  std::vector<std::int32_t> node;  // ancestry node per particle when tracked
  std::shared_ptr<AncestryRecord> ancestry;
  rng::Key key_flow{}, key_particle{}, key_branch{};
  std::vector<double> normals;  // per-particle normals for the current interval
  std::vector<double> flow_normals;

  std::size_t size() const { return hash.size(); }
  double time() const { return double(substep) / (double(n) * substeps); }
  double mass() const { return double(size()) / n; }
  AtomicMeasure measure() const;
  std::vector<Label> labels() const;  // requires genealogy tracking
};

ReplicaState init_population(const InitialMeasureSpec& spec, int n, int substeps, std::uint64_t seed,
                             std::uint64_t replicate, bool track_genealogy = false);

// What happened in the last sub-step; branching happens when a grid time is reached.
struct StepInfo {
  bool branched = false;
  std::vector<double> pre_positions;     // positions just before branching, old order
  std::vector<std::uint64_t> pre_hash;
  std::vector<std::uint8_t> offspring;   // 0 or 2 per old particle
};

// One Euler-Maruyama sub-step of length dt_sub (must equal 1/(n*substeps)), then
// critical binary branching if the new time lies on the 1/n grid.
void advance(const CoefficientModel& model, ReplicaState& state, double dt_sub, StepInfo* info = nullptr);

// Draws the offspring count (0 or 2) of the particle with `hash` at grid step `step`.
inline int offspring_draw(const rng::Key& key_branch, std::uint64_t hash, int step) {
  const auto w = rng::philox4x32_10(rng::hash_counter(hash, static_cast<std::uint32_t>(step), 0), key_branch);
  return (w[0] & 1u) ? 2 : 0;
}

class FrameObserver {
 public:
  virtual ~FrameObserver() = default;
  // Called after initialisation (info == nullptr) and after every sub-step.
  virtual void on_frame(const ReplicaState& state, const StepInfo* info) = 0;
};

// Runs one replicate to the horizon and returns the final state.
ReplicaState simulate(const SimSpec& spec, std::uint64_t replicate, FrameObserver* observer = nullptr);

struct Frame {
  double time = 0.0;
  long substep = 0;
  std::vector<double> positions;
  std::vector<std::uint64_t> hashes;
  bool branched = false;  // populated only on full-resolution trajectories
  std::vector<double> pre_positions;
  std::vector<std::uint64_t> pre_hashes;
  std::vector<std::uint8_t> offspring;
};

struct Trajectory {
  int dim = 1;
  int n = 1;
  int substeps = 1;
  long stride = 1;  // sub-steps between frames
  std::vector<Frame> frames;

  bool full_resolution() const { return stride == 1; }
  double weight() const { return 1.0 / n; }
  double horizon() const { return frames.empty() ? 0.0 : frames.back().time; }
  AtomicMeasure measure(std::size_t frame) const;
  // Nearest recorded frame; throws RangeError beyond the horizon.
  AtomicMeasure measure_at(double t) const;
};

class TrajectoryRecorder : public FrameObserver {
 public:
  explicit TrajectoryRecorder(long stride = 1, long total_substeps = -1);
  void on_frame(const ReplicaState& state, const StepInfo* info) override;
  Trajectory take() { return std::move(traj_); }

 private:
  Trajectory traj_;
  long total_;
};

Trajectory simulate_trajectory(const SimSpec& spec, std::uint64_t replicate, long stride = 1);

// Z_t(f) = <f, mu_t> - <f, mu_0> - int_0^t <L f, mu_s> ds on the recorded grid
// (left-endpoint Riemann sum).  Requires a full-resolution trajectory.
struct MartingalePoint {
  double t;
  double z;
};
std::vector<MartingalePoint> martingale_path(const Trajectory& traj, const CoefficientModel& model,
                                             const TestFunction& f);

// Streaming Z_T(f) and the bracket integral int (<f^2, mu_s> + <Lambda f, mu_s^2>) ds.
class MartingaleAccumulator : public FrameObserver {
 public:
  MartingaleAccumulator(const CoefficientModel& model, const TestFunction& f);
  void on_frame(const ReplicaState& state, const StepInfo* info) override;
  void add_frame(double t, const double* positions, std::size_t count, double weight);
  double z() const { return current_ - initial_ - drift_; }
  double bracket() const { return bracket_; }

 private:
  const CoefficientModel* model_;
  TestEvaluator eval_;
  int dim_;
  std::vector<double> a_const_;
  Mat c_const_;
  bool started_ = false;
  double last_t_ = 0.0;
  double last_gen_ = 0.0, last_br_ = 0.0;
  double initial_ = 0.0, current_ = 0.0, drift_ = 0.0, bracket_ = 0.0;
  std::vector<double> grad_, flowsum_;
};

struct QuadraticVariation {
  double empirical = 0.0;   // mean of Z_T^2
  double empirical_se = 0.0;
  double predicted = 0.0;   // mean of the bracket integral
  double predicted_se = 0.0;
  double mean_z = 0.0;
  double mean_z_se = 0.0;
};

QuadraticVariation quadratic_variation_check(const std::vector<Trajectory>& ensemble, const CoefficientModel& model,
                                             const TestFunction& f);
QuadraticVariation summarize_martingale(const std::vector<double>& z_terminal, const std::vector<double>& bracket);

// Binary dump records: int64 step, uint64 label hash, float64 x d position, uint8 alive.
struct DumpRecord {
  std::int64_t step;
  std::uint64_t hash;
  std::vector<double> position;
  bool alive;
};
void write_trajectory_dump(const Trajectory& traj, std::ostream& os);
std::vector<DumpRecord> read_trajectory_dump(std::istream& is, int dim);

// CSV with columns t, mass, then one column per named test function.
void write_replicate_summary_csv(std::ostream& os, const Trajectory& traj, const std::vector<TestFunction>& tests,
                                 const std::vector<std::string>& names);

}  // namespace flowsilt
