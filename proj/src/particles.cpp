#include "flowsilt/particles.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace flowsilt {

namespace {

Vec to_vec(const double* x, int d) { return Eigen::Map<const Vec>(x, d); }

std::uint64_t key64(const rng::Key& k) { return std::uint64_t(k[0]) | (std::uint64_t(k[1]) << 32); }

}  // namespace

double integrate_test(const AtomicMeasure& measure, const TestFunction& f) {
  if (measure.size() == 0) return 0.0;
  TestEvaluator ev(f, measure.dim);
  std::vector<double> vals(measure.size());
  for (std::size_t i = 0; i < measure.size(); ++i) vals[i] = ev.value(measure.atom(i));
  return measure.weight * pairwise_sum(vals);
}

double pair_integrate(const AtomicMeasure& mu_s, const AtomicMeasure& mu_t, const TestFunction& f, const Vec& u) {
  if (mu_s.size() == 0 || mu_t.size() == 0) return 0.0;
  if (mu_s.dim != mu_t.dim || u.size() != mu_s.dim) throw ArgumentError("pair_integrate: dimension mismatch");
  const int d = mu_s.dim;
  TestEvaluator ev(f, d);
  std::vector<double> rows(mu_s.size());
  std::vector<double> z(static_cast<std::size_t>(d));
  for (std::size_t a = 0; a < mu_s.size(); ++a) {
    double acc = 0.0;
    for (std::size_t b = 0; b < mu_t.size(); ++b) {
      for (int i = 0; i < d; ++i) z[i] = mu_s.atom(a)[i] - mu_t.atom(b)[i] - u(i);
      acc += ev.value(z.data());
    }
    rows[a] = acc;
  }
  return mu_s.weight * mu_t.weight * pairwise_sum(rows);
}

// ---------------------------------------------------------------------------

TestEvaluator::TestEvaluator(const TestFunction& f, int dim) : f_(&f), dim_(dim) {
  if (f.is_gaussian()) {
    kind_ = 0;
    const auto& b = f.bump();
    if (b.center.size() != dim) throw ArgumentError("test function dimension does not match the measure");
    center_.assign(b.center.data(), b.center.data() + dim);
    prec_.resize(static_cast<std::size_t>(dim * dim));
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) prec_[i * dim + j] = b.inv_cov(i, j);
    amp_ = b.amplitude;
  } else if (f.is_one()) {
    kind_ = 1;
  } else {
    kind_ = 2;
  }
}

double TestEvaluator::value(const double* x) const {
  if (kind_ == 1) return 1.0;
  if (kind_ == 2) return f_->value(to_vec(x, dim_));
  double q = 0.0;
  for (int i = 0; i < dim_; ++i) {
    const double zi = x[i] - center_[i];
    double row = 0.0;
    for (int j = 0; j < dim_; ++j) row += prec_[i * dim_ + j] * (x[j] - center_[j]);
    q += zi * row;
  }
  return amp_ * std::exp(-0.5 * q);
}

double TestEvaluator::value_grad_gen(const double* x, const double* a, double* grad, double* gen) const {
  const int d = dim_;
  if (kind_ == 1) {
    for (int i = 0; i < d; ++i) grad[i] = 0.0;
    *gen = 0.0;
    return 1.0;
  }
  if (kind_ == 2) {
    const Vec xv = to_vec(x, d);
    const Vec g = f_->gradient(xv);
    const Mat h = f_->hessian(xv);
    double tr = 0.0;
    for (int i = 0; i < d; ++i) {
      grad[i] = g(i);
      for (int j = 0; j < d; ++j) tr += a[i * d + j] * h(j, i);
    }
    *gen = 0.5 * tr;
    return f_->value(xv);
  }
  double pz[3];
  std::vector<double> heap;
  double* p = pz;
  if (d > 3) {
    heap.resize(static_cast<std::size_t>(d));
    p = heap.data();
  }
  double q = 0.0;
  for (int i = 0; i < d; ++i) {
    double row = 0.0;
    for (int j = 0; j < d; ++j) row += prec_[i * d + j] * (x[j] - center_[j]);
    p[i] = row;
    q += (x[i] - center_[i]) * row;
  }
  const double f = amp_ * std::exp(-0.5 * q);
  // hess f = f (P z z^T P - P)
  double quad = 0.0, trap = 0.0;
  for (int i = 0; i < d; ++i) {
    grad[i] = -f * p[i];
    for (int j = 0; j < d; ++j) {
      quad += p[i] * a[i * d + j] * p[j];
      trap += a[i * d + j] * prec_[j * d + i];
    }
  }
  *gen = 0.5 * f * (quad - trap);
  return f;
}

// ---------------------------------------------------------------------------

long SimSpec::total_substeps() const {
  if (n < 1 || substeps < 1) throw ArgumentError("simulation: n and substeps must be >= 1");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ArgumentError("simulation: horizon must be finite and >= 0");
  return std::lround(horizon * double(n) * substeps);
}

AtomicMeasure ReplicaState::measure() const {
  AtomicMeasure m;
  m.dim = dim;
  m.time = time();
  m.weight = 1.0 / n;
  m.positions = pos;
  return m;
}

std::vector<Label> ReplicaState::labels() const {
  if (!ancestry) throw ArgumentError("labels: genealogy tracking is disabled for this replicate");
  std::vector<Label> out;
  out.reserve(node.size());
  for (auto id : node) out.push_back(ancestry->label(id));
  return out;
}

ReplicaState init_population(const InitialMeasureSpec& spec, int n, int substeps, std::uint64_t seed,
                             std::uint64_t replicate, bool track_genealogy) {
  if (n < 1 || substeps < 1) throw ArgumentError("init_population: n and substeps must be >= 1");
  ReplicaState st;
  st.dim = spec.dim();
  st.n = n;
  st.substeps = substeps;
  st.key_flow = rng::derive_key(seed, replicate, rng::Stream::Flow);
  st.key_particle = rng::derive_key(seed, replicate, rng::Stream::Particle);
  st.key_branch = rng::derive_key(seed, replicate, rng::Stream::Branch);
  const int d = st.dim;
  const long total = std::lround(double(n) * spec.total_mass());

  if (spec.is_atomic()) {
    const auto& atoms = spec.atom_list();
    std::vector<long> count(atoms.size());
    std::vector<double> frac(atoms.size());
    long placed = 0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const double x = double(n) * atoms[i].mass;
      count[i] = static_cast<long>(std::floor(x));
      frac[i] = x - double(count[i]);
      placed += count[i];
    }
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (long r = 0; r < total - placed; ++r) ++count[order[static_cast<std::size_t>(r) % order.size()]];
    for (std::size_t i = 0; i < atoms.size(); ++i)
      for (long c = 0; c < count[i]; ++c)
        for (int j = 0; j < d; ++j) st.pos.push_back(atoms[i].position(j));
  } else {
    const rng::Key k = rng::derive_key(seed, replicate, rng::Stream::Init);
    const Vec& lo = spec.box_lo();
    const Vec& hi = spec.box_hi();
    for (long i = 0; i < total; ++i) {
      rng::PhiloxEngine eng(key64(k), static_cast<std::uint64_t>(i));
      Vec x(d);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 1000000) throw SimulationDivergedError("init_population: rejection sampling failed");
        for (int j = 0; j < d; ++j) x(j) = lo(j) + (hi(j) - lo(j)) * eng.uniform();
        if (spec.is_uniform() || eng.uniform() * spec.density_bound() <= spec.density_fn()(x)) break;
      }
      for (int j = 0; j < d; ++j) st.pos.push_back(x(j));
    }
  }
  st.hash.resize(static_cast<std::size_t>(total));
  for (long i = 0; i < total; ++i) st.hash[i] = root_hash(static_cast<std::uint32_t>(i + 1));
  if (track_genealogy) {
    st.ancestry = std::make_shared<AncestryRecord>();
    st.node.resize(static_cast<std::size_t>(total));
    for (long i = 0; i < total; ++i) st.node[i] = st.ancestry->add_root(static_cast<std::uint32_t>(i + 1), 0);
  }
  return st;
}

void advance(const CoefficientModel& model, ReplicaState& st, double dt_sub, StepInfo* info) {
  const double expected = 1.0 / (double(st.n) * st.substeps);
  if (std::abs(dt_sub - expected) > 1e-12 * expected) {
    throw ArgumentError("advance: dt_sub must equal 1/(n*substeps)");
  }
  const int d = st.dim;
  const int m = model.flow_dim();
  if (model.dim() != d) throw ArgumentError("advance: model dimension does not match the population");
  const int S = st.substeps;
  const int sub = static_cast<int>(st.substep % S);
  const std::size_t N = st.size();
  const int per = S * d;

  if (sub == 0) {
    st.normals.resize(N * static_cast<std::size_t>(per));
    for (std::size_t a = 0; a < N; ++a) {
      rng::fill_normals(st.key_particle, std::uint32_t(st.hash[a]), std::uint32_t(st.hash[a] >> 32),
                        static_cast<std::uint32_t>(st.step), &st.normals[a * per], per);
    }
  }
  st.flow_normals.resize(static_cast<std::size_t>(m));
  rng::fill_normals(st.key_flow, std::uint32_t(st.substep), std::uint32_t(std::uint64_t(st.substep) >> 32), 0x464C4F57u,
                    st.flow_normals.data(), m);
  const double sq = std::sqrt(dt_sub);

  if (model.is_constant()) {
    const Vec& b = model.b_constant();
    const Mat& c = model.c_constant();
    double dw[8];
    std::vector<double> dw_heap;
    double* dW = dw;
    if (d > 8) {
      dw_heap.resize(static_cast<std::size_t>(d));
      dW = dw_heap.data();
    }
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int l = 0; l < m; ++l) s += c(i, l) * st.flow_normals[l];
      dW[i] = sq * s;
    }
    double bs[8];
    std::vector<double> bs_heap;
    double* bsq = bs;
    if (d > 8) {
      bs_heap.resize(static_cast<std::size_t>(d));
      bsq = bs_heap.data();
    }
    for (int i = 0; i < d; ++i) bsq[i] = sq * b(i);
    for (std::size_t a = 0; a < N; ++a) {
      double* y = &st.pos[a * d];
      const double* z = &st.normals[a * per + sub * d];
      for (int i = 0; i < d; ++i) y[i] += bsq[i] * z[i] + dW[i];
    }
  } else {
    for (std::size_t a = 0; a < N; ++a) {
      double* y = &st.pos[a * d];
      const Vec x = to_vec(y, d);
      const Vec b = model.b(x);
      const Mat c = model.c(x);
      const double* z = &st.normals[a * per + sub * d];
      for (int i = 0; i < d; ++i) {
        double s = b(i) * z[i];
        for (int l = 0; l < m; ++l) s += c(i, l) * st.flow_normals[l];
        y[i] += sq * s;
      }
    }
  }
  for (std::size_t a = 0; a < N; ++a) {
    for (int i = 0; i < d; ++i) {
      if (!std::isfinite(st.pos[a * d + i])) {
        std::ostringstream os;
        os << "simulation diverged: particle " << a << " (label hash " << st.hash[a] << ") at t=" << st.time();
        if (st.ancestry) os << " label " << st.ancestry->label(st.node[a]).to_string();
        throw SimulationDivergedError(os.str());
      }
    }
  }
  ++st.substep;
  if (info) info->branched = false;
  if (st.substep % S != 0) return;

  // Grid time reached: every particle dies or splits in two.
  const int k = static_cast<int>(st.substep / S);
  std::vector<double> pos;
  std::vector<std::uint64_t> hash;
  std::vector<std::int32_t> node;
  pos.reserve(st.pos.size());
  hash.reserve(N);
  if (info) {
    info->branched = true;
    info->pre_positions = st.pos;
    info->pre_hash = st.hash;
    info->offspring.assign(N, 0);
  }
  for (std::size_t a = 0; a < N; ++a) {
    const int kids = offspring_draw(st.key_branch, st.hash[a], k);
    if (info) info->offspring[a] = static_cast<std::uint8_t>(kids);
    if (st.ancestry) st.ancestry->record_death(st.node[a], k, kids == 2);
    if (kids == 0) continue;
    for (std::uint8_t bit = 0; bit < 2; ++bit) {
      for (int i = 0; i < d; ++i) pos.push_back(st.pos[a * d + i]);
      hash.push_back(child_hash(st.hash[a], bit, k));
      if (st.ancestry) node.push_back(st.ancestry->add_child(st.node[a], bit, k));
    }
  }
  st.pos = std::move(pos);
  st.hash = std::move(hash);
  st.node = std::move(node);
  st.step = k;
#ifndef NDEBUG
  {
    std::vector<std::uint64_t> sorted = st.hash;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw SimulationDivergedError("label hash collision at grid step " + std::to_string(k));
    }
  }
#endif
}

ReplicaState simulate(const SimSpec& spec, std::uint64_t replicate, FrameObserver* observer) {
  if (spec.model.dim() != spec.mu0.dim()) throw ArgumentError("simulate: model and initial measure dimensions differ");
  ReplicaState st = init_population(spec.mu0, spec.n, spec.substeps, spec.seed, replicate, spec.track_genealogy);
  if (observer) observer->on_frame(st, nullptr);
  const long K = spec.total_substeps();
  const double dt = spec.dt_sub();
  StepInfo info;
  for (long s = 0; s < K; ++s) {
    advance(spec.model, st, dt, observer ? &info : nullptr);
    if (observer) observer->on_frame(st, &info);
  }
  return st;
}

// ---------------------------------------------------------------------------

AtomicMeasure Trajectory::measure(std::size_t frame) const {
  const Frame& f = frames.at(frame);
  AtomicMeasure m;
  m.dim = dim;
  m.time = f.time;
  m.weight = weight();
  m.positions = f.positions;
  return m;
}

AtomicMeasure Trajectory::measure_at(double t) const {
  if (frames.empty()) throw RangeError("measure_at: empty trajectory");
  const double dt = 1.0 / (double(n) * substeps);
  if (t < -0.5 * dt || t > frames.back().time + 0.5 * dt) {
    throw RangeError("measure_at: t=" + format_double(t) + " outside [0, " + format_double(frames.back().time) + "]");
  }
  const long target = std::lround(t / dt);
  std::size_t best = 0;
  long gap = -1;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const long g = std::labs(frames[i].substep - target);
    if (gap < 0 || g < gap) {
      gap = g;
      best = i;
    }
  }
  return measure(best);
}

TrajectoryRecorder::TrajectoryRecorder(long stride, long total_substeps) : total_(total_substeps) {
  if (stride < 1) throw ArgumentError("trajectory stride must be >= 1");
  traj_.stride = stride;
}

void TrajectoryRecorder::on_frame(const ReplicaState& st, const StepInfo* info) {
  if (info == nullptr) {
    traj_.dim = st.dim;
    traj_.n = st.n;
    traj_.substeps = st.substeps;
  }
  const bool last = total_ >= 0 && st.substep == total_;
  if (st.substep % traj_.stride != 0 && !last) return;
  Frame f;
  f.time = st.time();
  f.substep = st.substep;
  f.positions = st.pos;
  f.hashes = st.hash;
  if (info && info->branched && traj_.stride == 1) {
    f.branched = true;
    f.pre_positions = info->pre_positions;
    f.pre_hashes = info->pre_hash;
    f.offspring = info->offspring;
  }
  traj_.frames.push_back(std::move(f));
}

Trajectory simulate_trajectory(const SimSpec& spec, std::uint64_t replicate, long stride) {
  TrajectoryRecorder rec(stride, spec.total_substeps());
  simulate(spec, replicate, &rec);
  return rec.take();
}

// ---------------------------------------------------------------------------

MartingaleAccumulator::MartingaleAccumulator(const CoefficientModel& model, const TestFunction& f)
    : model_(&model), eval_(f, model.dim()), dim_(model.dim()) {
  grad_.resize(static_cast<std::size_t>(dim_));
  flowsum_.resize(static_cast<std::size_t>(model.flow_dim()));
  if (model.is_constant()) {
    const Vec z = Vec::Zero(dim_);
    const Mat a = a_matrix(model, z, z, true);
    a_const_.resize(static_cast<std::size_t>(dim_ * dim_));
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) a_const_[i * dim_ + j] = a(i, j);
    c_const_ = model.c_constant();
  }
}

void MartingaleAccumulator::add_frame(double t, const double* pos, std::size_t count, double w) {
  const int d = dim_;
  const int m = model_->flow_dim();
  double sf = 0.0, sgen = 0.0, sf2 = 0.0;
  std::fill(flowsum_.begin(), flowsum_.end(), 0.0);
  std::vector<double> a_local;
  for (std::size_t k = 0; k < count; ++k) {
    const double* x = pos + k * d;
    const double* a = a_const_.data();
    Mat c_local;
    const Mat* c = &c_const_;
    if (!model_->is_constant()) {
      const Vec xv = to_vec(x, d);
      const Mat am = a_matrix(*model_, xv, xv, true);
      a_local.assign(am.data(), am.data() + d * d);  // symmetric, so storage order is irrelevant
      a = a_local.data();
      c_local = model_->c(xv);
      c = &c_local;
    }
    double gen = 0.0;
    const double fv = eval_.value_grad_gen(x, a, grad_.data(), &gen);
    sf += fv;
    sf2 += fv * fv;
    sgen += gen;
    for (int l = 0; l < m; ++l) {
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += grad_[i] * (*c)(i, l);
      flowsum_[l] += s;
    }
  }
  double lam = 0.0;
  for (int l = 0; l < m; ++l) lam += (w * flowsum_[l]) * (w * flowsum_[l]);
  const double br = w * sf2 + lam;
  if (!started_) {
    started_ = true;
    initial_ = w * sf;
  } else {
    drift_ += last_gen_ * (t - last_t_);
    bracket_ += last_br_ * (t - last_t_);
  }
  current_ = w * sf;
  last_gen_ = w * sgen;
  last_br_ = br;
  last_t_ = t;
}

void MartingaleAccumulator::on_frame(const ReplicaState& st, const StepInfo*) {
  add_frame(st.time(), st.pos.data(), st.size(), 1.0 / st.n);
}

std::vector<MartingalePoint> martingale_path(const Trajectory& traj, const CoefficientModel& model,
                                             const TestFunction& f) {
  if (!traj.full_resolution()) throw ArgumentError("martingale_path: trajectory must be stored at sub-step resolution");
  if (!f.is_smooth()) throw UnsupportedError("martingale_path: test function is not twice differentiable");
  MartingaleAccumulator acc(model, f);
  std::vector<MartingalePoint> out;
  out.reserve(traj.frames.size());
  for (const auto& fr : traj.frames) {
    acc.add_frame(fr.time, fr.positions.data(), fr.positions.size() / traj.dim, traj.weight());
    out.push_back({fr.time, acc.z()});
  }
  return out;
}

QuadraticVariation summarize_martingale(const std::vector<double>& z, const std::vector<double>& bracket) {
  QuadraticVariation q;
  std::vector<double> z2(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) z2[i] = z[i] * z[i];
  const auto mz = mean_se(z);
  const auto mz2 = mean_se(z2);
  const auto mb = mean_se(bracket);
  q.mean_z = mz.mean;
  q.mean_z_se = mz.se;
  q.empirical = mz2.mean;
  q.empirical_se = mz2.se;
  q.predicted = mb.mean;
  q.predicted_se = mb.se;
  return q;
}

QuadraticVariation quadratic_variation_check(const std::vector<Trajectory>& ensemble, const CoefficientModel& model,
                                             const TestFunction& f) {
  std::vector<double> z, br;
  for (const auto& traj : ensemble) {
    if (!traj.full_resolution()) throw ArgumentError("quadratic_variation_check: trajectories must be full resolution");
    MartingaleAccumulator acc(model, f);
    for (const auto& fr : traj.frames) acc.add_frame(fr.time, fr.positions.data(), fr.positions.size() / traj.dim, traj.weight());
    z.push_back(acc.z());
    br.push_back(acc.bracket());
  }
  return summarize_martingale(z, br);
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof v));
}

}  // namespace

void write_trajectory_dump(const Trajectory& traj, std::ostream& os) {
  const int d = traj.dim;
  for (const auto& fr : traj.frames) {
    const std::size_t N = fr.hashes.size();
    if (fr.branched) {
      for (std::size_t a = 0; a < fr.offspring.size(); ++a) {
        if (fr.offspring[a] != 0) continue;
        put<std::int64_t>(os, fr.substep);
        put<std::uint64_t>(os, fr.pre_hashes[a]);
        for (int i = 0; i < d; ++i) put<double>(os, fr.pre_positions[a * d + i]);
        put<std::uint8_t>(os, 0);
      }
    }
    for (std::size_t a = 0; a < N; ++a) {
      put<std::int64_t>(os, fr.substep);
      put<std::uint64_t>(os, fr.hashes[a]);
      for (int i = 0; i < d; ++i) put<double>(os, fr.positions[a * d + i]);
      put<std::uint8_t>(os, 1);
    }
  }
  if (!os) throw IoError("trajectory dump: write failed");
}

std::vector<DumpRecord> read_trajectory_dump(std::istream& is, int dim) {
  std::vector<DumpRecord> out;
  for (;;) {
    DumpRecord r;
    if (!get(is, r.step)) break;
    if (!get(is, r.hash)) throw IoError("trajectory dump: truncated record");
    r.position.resize(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i)
      if (!get(is, r.position[i])) throw IoError("trajectory dump: truncated record");
    std::uint8_t alive = 0;
    if (!get(is, alive)) throw IoError("trajectory dump: truncated record");
    r.alive = alive != 0;
    out.push_back(std::move(r));
  }
  return out;
}

void write_replicate_summary_csv(std::ostream& os, const Trajectory& traj, const std::vector<TestFunction>& tests,
                                 const std::vector<std::string>& names) {
  if (names.size() != tests.size()) throw ArgumentError("summary csv: one name per test function");
  os << "t,mass";
  for (const auto& nm : names) os << ',' << nm;
  os << '\n';
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    const auto m = traj.measure(i);
    os << format_double(m.time) << ',' << format_double(m.mass());
    for (const auto& f : tests) os << ',' << format_double(integrate_test(m, f));
    os << '\n';
  }
}

}  // namespace flowsilt
