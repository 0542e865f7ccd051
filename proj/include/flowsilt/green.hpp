#pragma once

#include "flowsilt/model.hpp"

#include <memory>
#include <vector>

namespace flowsilt {

// int_0^inf e^{-lambda t} (2 pi t)^{-d/2} e^{-r^2 / 2t} dt by trapezoid in log time.
// Returns +inf at r = 0 for d >= 2.
double heat_resolvent_quadrature(int d, double lambda, double r);
// Radial derivative of the above.
double heat_resolvent_derivative_quadrature(int d, double lambda, double r);

// Radial profile g of the unit-diffusion resolvent, (lambda - 1/2 Laplacian) g = delta_0.
// Closed form in d = 1, 3; log-radius Hermite table built from quadrature in d = 2.
class RadialResolvent {
 public:
  RadialResolvent(int dim, double lambda);
  int dim() const { return dim_; }
  double lambda() const { return lambda_; }
  double kappa() const { return kappa_; }
  double value(double r) const;
  double derivative(double r) const;
  // Regular radial solution with j(0) = 1, and its r-derivative.
  double regular(double r) const;
  double regular_derivative(double r) const;
  bool closed_form() const { return dim_ != 2; }

 private:
  int dim_;
  double lambda_, kappa_;
  double s_lo_ = 0.0, s_hi_ = 0.0, ds_ = 0.0;
  std::vector<double> tab_g_, tab_dg_;  // g and dg/ds on the log-radius grid (d = 2)
};

// Surface area of the unit sphere in R^d.
double sphere_area(int d);

// G^{lambda,u}(x) = int_0^inf e^{-lambda t} q_t(u, x) dt for constant coefficients,
// G(z) = det(A)^{-1/2} g(|A^{-1/2} z|).
class GreenFunction {
 public:
  GreenFunction(const CoefficientModel& model, double lambda, Vec u = Vec());
  GreenFunction(const Mat& covariance, double lambda, Vec u = Vec());

  int dim() const { return dim_; }
  double lambda() const { return profile_->lambda(); }
  const Vec& u() const { return u_; }
  const Mat& covariance() const { return A_; }
  const Mat& whitening() const { return W_; }  // A^{-1/2}
  double det_factor() const { return det_factor_; }
  bool closed_form() const { return profile_->closed_form(); }
  const RadialResolvent& profile() const { return *profile_; }

  double whitened_norm(const double* z) const;
  double centered(const double* z) const;  // G^{lambda,0}(z)
  double operator()(const Vec& x) const;   // G^{lambda,u}(x)

 private:
  int dim_;
  Mat A_, W_;
  double det_factor_;
  Vec u_;
  std::shared_ptr<const RadialResolvent> profile_;
};

double resolvent_green(const CoefficientModel& model, double lambda, const Vec& u, const Vec& x);
// Independent time-integral evaluation with the full Gaussian density of q_t.
double resolvent_green_quadrature(const CoefficientModel& model, double lambda, const Vec& u, const Vec& x);

// Radial profile value and first two radial derivatives.
struct RadialSample {
  double g = 0.0, g1 = 0.0, g2 = 0.0;
};

// G_eps = G * psi_eps with psi_eps a smooth bump supported on the A-ellipsoid of
// the same volume as the Euclidean eps-ball (exactly the eps-ball when A is scalar).
// The profile is cached on `grid` points over the bump radius; beyond it
// G_eps = M(eps) G exactly.  Values below 1e-12 of the peak are truncated to zero.
class MollifiedGreen {
 public:
  MollifiedGreen(const GreenFunction& base, double eps, int grid = 4096);

  double eps() const { return eps_; }
  const GreenFunction& base() const { return base_; }
  int dim() const { return base_.dim(); }
  double lambda() const { return base_.lambda(); }
  double whitened_radius() const { return rho_; }  // bump radius in whitened units
  double cutoff_radius() const { return r_cut_; }  // whitened truncation radius
  double mass_factor() const { return mass_; }     // M(eps)
  double peak() const { return peak_; }            // G_eps(0)

  // Unit-diffusion profile of G_eps and psi_eps in whitened coordinates.
  RadialSample radial(double r) const;
  double bump(double r) const;

  double centered(const double* z) const;  // G_eps^{lambda,0}(z)
  double operator()(const Vec& x) const;   // G_eps^{lambda,u}(x)
  // grad of G_eps^{lambda,0} at z
  double value_grad(const double* z, double* grad) const;
  // 1/2 tr(a H(z)) with B = W a W given row-major; returns G as well.
  double value_generator(const double* z, const double* B, double* gen) const;
  // Value, gradient and 1/2 tr(a H) in one pass.
  double value_grad_generator(const double* z, const double* B, double* grad, double* gen) const;
  // ((lambda - L) G_eps)(z) for the generator whose covariance matches the base.
  double resolvent_applied(const double* z) const;

  // ||G_eps - G||_1 and int G_eps by radial quadrature.
  double l1_distance_to_base() const;
  double integral() const;

 private:
  GreenFunction base_;
  double eps_, rho_, r_cut_ = 0.0, mass_ = 1.0;
  double bump_norm_ = 1.0;
  int n_;
  double h_;
  std::vector<double> g_, g1_, g2_;
  double peak_ = 0.0;
};

// B = W a W for a constant generator covariance a.
Mat generator_in_whitened(const GreenFunction& base, const Mat& a);

}  // namespace flowsilt
