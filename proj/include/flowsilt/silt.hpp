#pragma once

#include "flowsilt/green.hpp"
#include "flowsilt/particles.hpp"
#include "flowsilt/stats.hpp"

#include <iosfwd>
#include <vector>

namespace flowsilt {

struct SiltComponents {
  double eps = 0.0;
  double gamma = 0.0;
  double double_point = 0.0;
  double lambda_term = 0.0;
  double boundary_term = 0.0;
  double stochastic_term = 0.0;  // martingale-increment form
  double renormalized = 0.0;     // gamma - double_point
  double ito_residual = 0.0;     // renormalized - (lambda_term - boundary_term + stochastic_term)
  // Stochastic integral built from the driving increments: grad f_k . dY plus the
  // branching jumps.  Carries no mollifier-scale grid noise.
  double stochastic_noise = 0.0;
  double tanaka = 0.0;  // lambda_term - boundary_term + stochastic_noise
};

// All pair functionals use <phi, mu_s mu_t> = sum_a sum_b w^2 phi(x_a - y_b - u) with x
// from mu_s and y from mu_t, self-pairs included.  The generator L acts in y with
// coefficients of `dynamics`.  T must be a recorded frame time of a full-resolution
// trajectory; T = 0 gives zeros, fewer than 8 grid points below T is a ResolutionError.
std::vector<SiltComponents> tanaka_decomposition(const Trajectory& traj, const std::vector<const MollifiedGreen*>& kernels,
                                                 const CoefficientModel& dynamics, const Vec& u, double T);
SiltComponents tanaka_decomposition(const Trajectory& traj, const MollifiedGreen& kernel,
                                    const CoefficientModel& dynamics, const Vec& u, double T);

double gamma_epsilon(const Trajectory& traj, const MollifiedGreen& kernel, const CoefficientModel& dynamics,
                     const Vec& u, double T);
double double_point_term(const Trajectory& traj, const MollifiedGreen& kernel, const Vec& u, double T);

// int_0^T <G, mu_t mu_t> dt with the unmollified kernel (finite in d = 1 only).
double exact_double_point(const Trajectory& traj, const GreenFunction& green, const Vec& u, double T);

// Trapezoid double integral over s <= t of <1{|x - y - u| < h} / vol(B_h), mu_s mu_t>.
double small_ball_occupation(const Trajectory& traj, double h, const Vec& u, double T);

enum class LambdaEstimator { Renormalized, Tanaka };

struct EpsStudyOptions {
  SimSpec sim;
  int replicates = 100;
  double lambda = 1.0;
  Vec u;
  double T = 1.0;
  std::vector<double> eps;         // strictly decreasing, length >= 3
  std::vector<double> ball_radii;  // optional small-ball radii, decreasing
  LambdaEstimator estimator = LambdaEstimator::Tanaka;
  int threads = 0;
};

struct EpsStudyRow {
  double eps_i = 0.0, eps_j = 0.0;
  double l2 = 0.0, se = 0.0;
};

struct EpsReplicate {
  std::vector<SiltComponents> components;  // one per eps
  std::vector<double> ball;                // small-ball occupation per radius
  double exact_double_point = 0.0;
};

struct EpsStudyResult {
  std::vector<double> eps;
  std::vector<EpsStudyRow> rows;
  std::vector<VarianceSe> variance;  // Var Lambda_eps
  std::vector<MeanSe> mean_lambda;
  std::vector<MeanSe> mean_double_point;
  std::vector<EpsReplicate> replicates;
  LambdaEstimator estimator = LambdaEstimator::Tanaka;

  double lambda_value(std::size_t replicate, std::size_t eps_index) const;
};

EpsStudyResult epsilon_convergence_study(const EpsStudyOptions& opts);

// CSV writers with the fixed column schemas.
void write_silt_components_csv(std::ostream& os, const EpsStudyResult& result);
void write_eps_study_csv(std::ostream& os, const EpsStudyResult& result);

}  // namespace flowsilt
