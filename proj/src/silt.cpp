#include "flowsilt/silt.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/parallel.hpp"

#include <cmath>
#include <ostream>

namespace flowsilt {

namespace {

struct GridView {
  int K = 0;       // last frame index used
  double h = 0.0;  // time step
  int d = 1;
  double w = 1.0;  // atom weight
};

// Frames 0..K with t_K = T.  K = -1 means T = 0.
GridView make_view(const Trajectory& traj, double T) {
  GridView v;
  v.d = traj.dim;
  v.w = traj.weight();
  if (!(T >= 0.0)) throw ArgumentError("silt: T must be >= 0");
  if (T == 0.0) {
    v.K = -1;
    return v;
  }
  if (!traj.full_resolution()) throw ResolutionError("silt: full-resolution trajectory required");
  if (traj.frames.size() < 2) throw ResolutionError("silt: fewer than 8 time points on the grid");
  int K = -1;
  for (std::size_t k = 0; k < traj.frames.size(); ++k)
    if (traj.frames[k].time <= T * (1.0 + 1e-12) + 1e-15) K = static_cast<int>(k);
  if (K + 1 < 8) throw ResolutionError("silt: fewer than 8 time points on the grid below T");
  if (std::abs(traj.frames[K].time - T) > 1e-9 * std::max(1.0, T))
    throw RangeError("silt: T is not a recorded frame time (horizon " + format_double(traj.horizon()) + ")");
  v.K = K;
  v.h = T / K;
  return v;
}

inline std::size_t count_of(const std::vector<double>& pos, int d) { return pos.size() / static_cast<std::size_t>(d); }

// Trapezoid weight of frame j in the inner integral over [0, t_k].
inline double inner_w(int j, int k) { return k == 0 ? 0.0 : ((j == 0 || j == k) ? 0.5 : 1.0); }
inline double outer_w(int k, int K) { return (k == 0 || k == K) ? 0.5 : 1.0; }

struct Square {
  int n;
  std::vector<double> v;
  explicit Square(int n_) : n(n_), v(static_cast<std::size_t>(n_) * n_, 0.0) {}
  double& at(int j, int k) { return v[static_cast<std::size_t>(k) * n + j]; }
  double at(int j, int k) const { return v[static_cast<std::size_t>(k) * n + j]; }
};

double inner(const Square& M, int k, double h) {
  double s = 0.0;
  for (int j = 0; j <= k; ++j) s += inner_w(j, k) * M.at(j, k);
  return h * s;
}

double trap2d(const Square& M, int K, double h) {
  double s = 0.0;
  for (int k = 0; k <= K; ++k) s += outer_w(k, K) * inner(M, k, h);
  return h * s;
}

double trap_diag(const Square& M, int K, double h) {
  double s = 0.0;
  for (int k = 0; k <= K; ++k) s += outer_w(k, K) * M.at(k, k);
  return h * s;
}

// Positions a particle of frame k occupies just before frame k+1 (same order as frame k).
const std::vector<double>& next_positions(const Trajectory& traj, int k) {
  const Frame& f = traj.frames[static_cast<std::size_t>(k + 1)];
  return f.branched ? f.pre_positions : f.positions;
}

SiltComponents decompose(const Trajectory& traj, const GridView& v, const MollifiedGreen& G,
                         const CoefficientModel& dyn, const Vec& u) {
  const int K = v.K, d = v.d, n = K + 1;
  const double w2 = v.w * v.w, h = v.h, lam = G.lambda();
  Square Gm(n), Lm(n), Dm(n), Pm(n);
  const Mat& W = G.base().whitening();

  // Generator covariance in whitened coordinates per particle of each frame.
  const bool const_dyn = dyn.is_constant();
  Mat Bc;
  if (const_dyn) Bc = (W * a_matrix(dyn, Vec::Zero(d), Vec::Zero(d), true) * W).transpose();
  std::vector<std::vector<double>> Bframe(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> dY(static_cast<std::size_t>(n));
  for (int k = 0; k <= K; ++k) {
    const auto& pos = traj.frames[k].positions;
    const std::size_t N = count_of(pos, d);
    if (!const_dyn) {
      auto& B = Bframe[k];
      B.resize(N * d * d);
      Vec y(d);
      for (std::size_t b = 0; b < N; ++b) {
        for (int i = 0; i < d; ++i) y[i] = pos[b * d + i];
        const Mat Bb = W * a_matrix(dyn, y, y, true) * W;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) B[b * d * d + i * d + j] = Bb(i, j);
      }
    }
    if (k < K) {
      const auto& nxt = next_positions(traj, k);
      auto& inc = dY[k];
      inc.resize(pos.size());
      for (std::size_t i = 0; i < pos.size(); ++i) inc[i] = nxt[i] - pos[i];
    }
  }

  double z[3], grad[3];
  for (int k = 0; k <= K; ++k) {
    const auto& Y = traj.frames[k].positions;
    const std::size_t Nk = count_of(Y, d);
    const bool has_inc = k < K;
    for (int j = 0; j <= k; ++j) {
      const auto& X = traj.frames[j].positions;
      const std::size_t Nj = count_of(X, d);
      double sg = 0.0, sl = 0.0, sd = 0.0;
      for (std::size_t b = 0; b < Nk; ++b) {
        const double* y = &Y[b * d];
        const double* B = const_dyn ? Bc.data() : &Bframe[k][b * d * d];
        for (std::size_t a = 0; a < Nj; ++a) {
          for (int i = 0; i < d; ++i) z[i] = X[a * d + i] - y[i] - u[i];
          double gen = 0.0;
          sg += G.value_grad_generator(z, B, has_inc ? grad : nullptr, &gen);
          sl += gen;
          if (has_inc) {
            // d/dy G(x - y - u) = -grad G(z)
            for (int i = 0; i < d; ++i) sd -= grad[i] * dY[k][b * d + i];
          }
        }
      }
      Gm.at(j, k) = w2 * sg;
      Lm.at(j, k) = w2 * sl;
      Dm.at(j, k) = w2 * sd;
    }
    // Pre-branching population of frame k+1 against frames j <= k.
    if (k < K && traj.frames[k + 1].branched) {
      const auto& Yp = traj.frames[k + 1].pre_positions;
      const std::size_t Np = count_of(Yp, d);
      for (int j = 0; j <= k; ++j) {
        const auto& X = traj.frames[j].positions;
        const std::size_t Nj = count_of(X, d);
        double s = 0.0;
        for (std::size_t b = 0; b < Np; ++b)
          for (std::size_t a = 0; a < Nj; ++a) {
            for (int i = 0; i < d; ++i) z[i] = X[a * d + i] - Yp[b * d + i] - u[i];
            s += G.centered(z);
          }
        Pm.at(j, k + 1) = w2 * s;
      }
    }
  }

  SiltComponents c;
  c.eps = G.eps();
  const double lg = trap2d(Lm, K, h);
  c.lambda_term = lam * trap2d(Gm, K, h);
  c.gamma = c.lambda_term - lg;
  c.double_point = trap_diag(Gm, K, h);
  c.renormalized = c.gamma - c.double_point;
  c.boundary_term = inner(Gm, K, h);
  double mi = 0.0, nd = 0.0;
  for (int k = 0; k < K; ++k) {
    double a = 0.0, b = 0.0;
    const bool br = traj.frames[k + 1].branched;
    for (int j = 0; j <= k; ++j) {
      const double wj = inner_w(j, k);
      a += wj * (Gm.at(j, k + 1) - Gm.at(j, k) - h * Lm.at(j, k));
      b += wj * (Dm.at(j, k) + (br ? Gm.at(j, k + 1) - Pm.at(j, k + 1) : 0.0));
    }
    mi += h * a;
    nd += h * b;
  }
  c.stochastic_term = mi;
  c.stochastic_noise = nd;
  c.ito_residual = c.renormalized - (c.lambda_term - c.boundary_term + c.stochastic_term);
  c.tanaka = c.lambda_term - c.boundary_term + c.stochastic_noise;
  return c;
}

Vec shift_or_zero(const Vec& u, int d) {
  if (u.size() == 0) return Vec::Zero(d);
  if (u.size() != d) throw ArgumentError("silt: u has the wrong dimension");
  return u;
}

}  // namespace

std::vector<SiltComponents> tanaka_decomposition(const Trajectory& traj, const std::vector<const MollifiedGreen*>& kernels,
                                                 const CoefficientModel& dynamics, const Vec& u, double T) {
  const GridView v = make_view(traj, T);
  const Vec uu = shift_or_zero(u, traj.dim);
  if (dynamics.dim() != traj.dim) throw ArgumentError("silt: dynamics dimension mismatch");
  std::vector<SiltComponents> out;
  for (const auto* G : kernels) {
    if (G->dim() != traj.dim) throw ArgumentError("silt: kernel dimension mismatch");
    if (v.K < 0) {
      SiltComponents z;
      z.eps = G->eps();
      out.push_back(z);
    } else {
      out.push_back(decompose(traj, v, *G, dynamics, uu));
    }
  }
  return out;
}

SiltComponents tanaka_decomposition(const Trajectory& traj, const MollifiedGreen& kernel,
                                    const CoefficientModel& dynamics, const Vec& u, double T) {
  return tanaka_decomposition(traj, std::vector<const MollifiedGreen*>{&kernel}, dynamics, u, T).front();
}

double gamma_epsilon(const Trajectory& traj, const MollifiedGreen& kernel, const CoefficientModel& dynamics,
                     const Vec& u, double T) {
  return tanaka_decomposition(traj, kernel, dynamics, u, T).gamma;
}

double double_point_term(const Trajectory& traj, const MollifiedGreen& kernel, const Vec& u, double T) {
  const GridView v = make_view(traj, T);
  if (v.K < 0) return 0.0;
  const Vec uu = shift_or_zero(u, traj.dim);
  const int d = v.d;
  double z[3];
  double s = 0.0;
  for (int k = 0; k <= v.K; ++k) {
    const auto& X = traj.frames[k].positions;
    const std::size_t N = count_of(X, d);
    double acc = 0.0;
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t a = 0; a < N; ++a) {
        for (int i = 0; i < d; ++i) z[i] = X[a * d + i] - X[b * d + i] - uu[i];
        acc += kernel.centered(z);
      }
    s += outer_w(k, v.K) * v.w * v.w * acc;
  }
  return v.h * s;
}

double exact_double_point(const Trajectory& traj, const GreenFunction& green, const Vec& u, double T) {
  const GridView v = make_view(traj, T);
  if (v.K < 0) return 0.0;
  const Vec uu = shift_or_zero(u, traj.dim);
  const int d = v.d;
  double z[3];
  double s = 0.0;
  for (int k = 0; k <= v.K; ++k) {
    const auto& X = traj.frames[k].positions;
    const std::size_t N = count_of(X, d);
    double acc = 0.0;
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t a = 0; a < N; ++a) {
        for (int i = 0; i < d; ++i) z[i] = X[a * d + i] - X[b * d + i] - uu[i];
        acc += green.centered(z);
      }
    s += outer_w(k, v.K) * v.w * v.w * acc;
  }
  return v.h * s;
}

double small_ball_occupation(const Trajectory& traj, double h, const Vec& u, double T) {
  if (!(h > 0.0)) throw ArgumentError("small_ball_occupation: radius must be positive");
  const GridView v = make_view(traj, T);
  if (v.K < 0) return 0.0;
  const Vec uu = shift_or_zero(u, traj.dim);
  const int d = v.d, K = v.K;
  const double vol = std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d + 1.0) * std::pow(h, d);
  const double h2 = h * h;
  Square M(K + 1);
  for (int k = 0; k <= K; ++k) {
    const auto& Y = traj.frames[k].positions;
    const std::size_t Nk = count_of(Y, d);
    for (int j = 0; j <= k; ++j) {
      const auto& X = traj.frames[j].positions;
      const std::size_t Nj = count_of(X, d);
      std::size_t cnt = 0;
      for (std::size_t b = 0; b < Nk; ++b)
        for (std::size_t a = 0; a < Nj; ++a) {
          double r2 = 0.0;
          for (int i = 0; i < d; ++i) {
            const double zi = X[a * d + i] - Y[b * d + i] - uu[i];
            r2 += zi * zi;
          }
          cnt += r2 < h2;
        }
      M.at(j, k) = v.w * v.w * static_cast<double>(cnt) / vol;
    }
  }
  return trap2d(M, K, v.h);
}

double EpsStudyResult::lambda_value(std::size_t replicate, std::size_t eps_index) const {
  const auto& c = replicates.at(replicate).components.at(eps_index);
  return estimator == LambdaEstimator::Tanaka ? c.tanaka : c.renormalized;
}

EpsStudyResult epsilon_convergence_study(const EpsStudyOptions& opts) {
  const auto& eps = opts.eps;
  if (eps.size() < 3) throw ArgumentError("eps study: schedule needs at least 3 values");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0)) throw ArgumentError("eps study: eps values must be positive");
    if (i > 0 && eps[i] > eps[i - 1]) throw ArgumentError("eps study: schedule must be decreasing");
  }
  if (opts.replicates < 2) throw ArgumentError("eps study: need at least 2 replicates");
  if (opts.T > opts.sim.horizon) throw RangeError("eps study: T beyond the simulation horizon");
  const CoefficientModel& model = opts.sim.model;
  const GreenFunction base(model, opts.lambda);
  std::vector<MollifiedGreen> kernels;
  kernels.reserve(eps.size());
  for (double e : eps) kernels.emplace_back(base, e);
  std::vector<const MollifiedGreen*> kp;
  for (const auto& k : kernels) kp.push_back(&k);
  const Vec u = shift_or_zero(opts.u, model.dim());
  const bool want_exact = !opts.ball_radii.empty() && model.dim() == 1;

  EpsStudyResult res;
  res.eps = eps;
  res.estimator = opts.estimator;
  res.replicates = parallel_map(static_cast<std::size_t>(opts.replicates), resolve_threads(opts.threads),
                                [&](std::size_t r) {
                                  const Trajectory traj = simulate_trajectory(opts.sim, r, 1);
                                  EpsReplicate rep;
                                  rep.components = tanaka_decomposition(traj, kp, model, u, opts.T);
                                  for (double hb : opts.ball_radii)
                                    rep.ball.push_back(small_ball_occupation(traj, hb, u, opts.T));
                                  if (want_exact) rep.exact_double_point = exact_double_point(traj, base, u, opts.T);
                                  return rep;
                                });
  const std::size_t R = res.replicates.size();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    std::vector<double> lam(R), dp(R);
    for (std::size_t r = 0; r < R; ++r) {
      lam[r] = res.lambda_value(r, i);
      dp[r] = res.replicates[r].components[i].double_point;
    }
    res.variance.push_back(variance_se(lam));
    res.mean_lambda.push_back(mean_se(lam));
    res.mean_double_point.push_back(mean_se(dp));
  }
  for (std::size_t i = 0; i + 1 < eps.size(); ++i) {
    std::vector<double> sq(R);
    for (std::size_t r = 0; r < R; ++r) {
      const double diff = res.lambda_value(r, i) - res.lambda_value(r, i + 1);
      sq[r] = diff * diff;
    }
    const MeanSe m = mean_se(sq);
    res.rows.push_back({eps[i], eps[i + 1], m.mean, m.se});
  }
  return res;
}

void write_silt_components_csv(std::ostream& os, const EpsStudyResult& result) {
  os << "replicate,eps,gamma,double_point,lambda_term,boundary_term,stochastic_term,renormalized,ito_residual\n";
  for (std::size_t r = 0; r < result.replicates.size(); ++r)
    for (const auto& c : result.replicates[r].components)
      os << r << ',' << format_double(c.eps) << ',' << format_double(c.gamma) << ',' << format_double(c.double_point)
         << ',' << format_double(c.lambda_term) << ',' << format_double(c.boundary_term) << ','
         << format_double(c.stochastic_term) << ',' << format_double(c.renormalized) << ','
         << format_double(c.ito_residual) << '\n';
  if (!os) throw IoError("failed writing SILT components CSV");
}

void write_eps_study_csv(std::ostream& os, const EpsStudyResult& result) {
  os << "eps_i,eps_j,L2_distance,stderr\n";
  for (const auto& row : result.rows)
    os << format_double(row.eps_i) << ',' << format_double(row.eps_j) << ',' << format_double(row.l2) << ','
       << format_double(row.se) << '\n';
  if (!os) throw IoError("failed writing eps study CSV");
}

}  // namespace flowsilt
