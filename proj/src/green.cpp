#include "flowsilt/green.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/quadrature.hpp"

#include <cmath>
#include <limits>

namespace flowsilt {

namespace {

constexpr double kLogStep = 0.1;
constexpr double kLogLo = -80.0;

double log_time_hi(double lambda, double r, double kappa) {
  return std::log(60.0 / lambda + 4.0 * r / kappa);
}

// Cubic Hermite on [0, 1].
inline double hermite(double t, double y0, double m0, double y1, double m1, double h) {
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * m0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * m1;
}

inline double raw_bump(double x) { return x < 1.0 ? std::exp(-1.0 / (1.0 - x * x)) : 0.0; }

}  // namespace

double sphere_area(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return 2.0 * M_PI;
    case 3: return 4.0 * M_PI;
    default: return 2.0 * std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d);
  }
}

double heat_resolvent_quadrature(int d, double lambda, double r) {
  if (!(lambda > 0.0)) throw ArgumentError("resolvent: lambda must be positive");
  if (d < 1) throw ArgumentError("resolvent: dimension must be positive");
  r = std::abs(r);
  if (r == 0.0 && d >= 2) return std::numeric_limits<double>::infinity();
  const double hi = log_time_hi(lambda, r, std::sqrt(2.0 * lambda));
  const int n = static_cast<int>(std::ceil((hi - kLogLo) / kLogStep));
  const double h = (hi - kLogLo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double v = kLogLo + i * h;
    const double t = std::exp(v);
    const double e = v - lambda * t - 0.5 * d * (v + std::log(2.0 * M_PI)) - r * r / (2.0 * t);
    s += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(e);
  }
  return h * s;
}

double heat_resolvent_derivative_quadrature(int d, double lambda, double r) {
  if (!(lambda > 0.0)) throw ArgumentError("resolvent: lambda must be positive");
  r = std::abs(r);
  if (r == 0.0) return d == 1 ? -1.0 : -std::numeric_limits<double>::infinity();
  const double hi = log_time_hi(lambda, r, std::sqrt(2.0 * lambda));
  const int n = static_cast<int>(std::ceil((hi - kLogLo) / kLogStep));
  const double h = (hi - kLogLo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double v = kLogLo + i * h;
    const double t = std::exp(v);
    const double e = -lambda * t - 0.5 * d * (v + std::log(2.0 * M_PI)) - r * r / (2.0 * t);
    s += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(e);
  }
  return -r * h * s;
}

RadialResolvent::RadialResolvent(int dim, double lambda) : dim_(dim), lambda_(lambda) {
  if (!(lambda > 0.0)) throw ArgumentError("resolvent: lambda must be positive");
  if (dim < 1 || dim > 3) throw UnsupportedError("resolvent profiles are implemented for d = 1, 2, 3");
  kappa_ = std::sqrt(2.0 * lambda);
  if (dim_ == 2) {
    const int n = 4000;
    s_lo_ = std::log(1e-9 / kappa_);
    s_hi_ = std::log(60.0 / kappa_);
    ds_ = (s_hi_ - s_lo_) / (n - 1);
    tab_g_.resize(n);
    tab_dg_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double r = std::exp(s_lo_ + i * ds_);
      tab_g_[i] = heat_resolvent_quadrature(2, lambda_, r);
      tab_dg_[i] = r * heat_resolvent_derivative_quadrature(2, lambda_, r);
    }
  }
}

double RadialResolvent::value(double r) const {
  r = std::abs(r);
  switch (dim_) {
    case 1: return std::exp(-kappa_ * r) / kappa_;
    case 3: return r == 0.0 ? std::numeric_limits<double>::infinity() : std::exp(-kappa_ * r) / (2.0 * M_PI * r);
    default: break;
  }
  if (r == 0.0) return std::numeric_limits<double>::infinity();
  const double s = std::log(r);
  if (s < s_lo_) {
    // small-r asymptotics (log singularity) anchored to the first node
    return tab_g_.front() - (s - s_lo_) / M_PI;
  }
  if (s >= s_hi_) return 0.0;
  const double x = (s - s_lo_) / ds_;
  const std::size_t i = std::min(static_cast<std::size_t>(x), tab_g_.size() - 2);
  const double t = x - static_cast<double>(i);
  return hermite(t, tab_g_[i], tab_dg_[i], tab_g_[i + 1], tab_dg_[i + 1], ds_);
}

double RadialResolvent::derivative(double r) const {
  r = std::abs(r);
  switch (dim_) {
    case 1: return -std::exp(-kappa_ * r);
    case 3:
      return r == 0.0 ? -std::numeric_limits<double>::infinity()
                      : -std::exp(-kappa_ * r) * (1.0 + kappa_ * r) / (2.0 * M_PI * r * r);
    default: break;
  }
  if (r == 0.0) return -std::numeric_limits<double>::infinity();
  const double s = std::log(r);
  if (s < s_lo_) return -1.0 / (M_PI * r);
  if (s >= s_hi_) return 0.0;
  const double x = (s - s_lo_) / ds_;
  const std::size_t i = std::min(static_cast<std::size_t>(x), tab_g_.size() - 2);
  const double t = x - static_cast<double>(i);
  const double r0 = std::exp(s_lo_ + i * ds_), r1 = std::exp(s_lo_ + (i + 1) * ds_);
  // d^2/ds^2 g(e^s) = 2 lambda r^2 g in d = 2
  const double m0 = 2.0 * lambda_ * r0 * r0 * tab_g_[i];
  const double m1 = 2.0 * lambda_ * r1 * r1 * tab_g_[i + 1];
  return hermite(t, tab_dg_[i], m0, tab_dg_[i + 1], m1, ds_) / r;
}

double RadialResolvent::regular(double r) const {
  const double x = kappa_ * std::abs(r);
  switch (dim_) {
    case 1: return std::cosh(x);
    case 2: return std::cyl_bessel_i(0.0, x);
    default: return x < 1e-4 ? 1.0 + x * x / 6.0 : std::sinh(x) / x;
  }
}

double RadialResolvent::regular_derivative(double r) const {
  const double x = kappa_ * std::abs(r);
  switch (dim_) {
    case 1: return kappa_ * std::sinh(x);
    case 2: return kappa_ * std::cyl_bessel_i(1.0, x);
    default: return kappa_ * (x < 1e-4 ? x / 3.0 : (x * std::cosh(x) - std::sinh(x)) / (x * x));
  }
}

GreenFunction::GreenFunction(const CoefficientModel& model, double lambda, Vec u)
    : GreenFunction(
          [&] {
            if (!model.is_constant()) throw UnsupportedError("Green's function requires constant coefficients");
            Mat a = model.c_constant() * model.c_constant().transpose();
            for (int i = 0; i < model.dim(); ++i) a(i, i) += model.b_constant()[i] * model.b_constant()[i];
            return a;
          }(),
          lambda, std::move(u)) {}

GreenFunction::GreenFunction(const Mat& covariance, double lambda, Vec u) : dim_(static_cast<int>(covariance.rows())) {
  if (covariance.rows() != covariance.cols() || dim_ < 1) throw ArgumentError("GreenFunction: covariance must be square");
  A_ = 0.5 * (covariance + covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(A_);
  if (es.eigenvalues().minCoeff() < kEllipticityFloor)
    throw ValidationError("GreenFunction: covariance violates uniform ellipticity");
  W_ = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  det_factor_ = 1.0 / std::sqrt(es.eigenvalues().prod());
  u_ = u.size() == 0 ? Vec::Zero(dim_) : std::move(u);
  if (u_.size() != dim_) throw ArgumentError("GreenFunction: u has the wrong dimension");
  profile_ = std::make_shared<RadialResolvent>(dim_, lambda);
}

double GreenFunction::whitened_norm(const double* z) const {
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) {
    double w = 0.0;
    for (int j = 0; j < dim_; ++j) w += W_(i, j) * z[j];
    s += w * w;
  }
  return std::sqrt(s);
}

double GreenFunction::centered(const double* z) const { return det_factor_ * profile_->value(whitened_norm(z)); }

double GreenFunction::operator()(const Vec& x) const {
  if (x.size() != dim_) throw ArgumentError("GreenFunction: argument has the wrong dimension");
  const Vec z = x - u_;
  return centered(z.data());
}

double resolvent_green(const CoefficientModel& model, double lambda, const Vec& u, const Vec& x) {
  return GreenFunction(model, lambda, u)(x);
}

double resolvent_green_quadrature(const CoefficientModel& model, double lambda, const Vec& u, const Vec& x) {
  if (!model.is_constant()) throw UnsupportedError("Green's function requires constant coefficients");
  if (!(lambda > 0.0)) throw ArgumentError("resolvent: lambda must be positive");
  const int d = model.dim();
  const Mat a = a_matrix(model, Vec::Zero(d), Vec::Zero(d), true);
  const Vec z = x - u;
  const double q = z.dot(a.ldlt().solve(z));
  const double det = a.determinant();
  if (q == 0.0 && d >= 2) return std::numeric_limits<double>::infinity();
  const double hi = std::log(60.0 / lambda + 4.0 * std::sqrt(q) / std::sqrt(2.0 * lambda));
  const int n = static_cast<int>(std::ceil((hi - kLogLo) / kLogStep));
  const double h = (hi - kLogLo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double v = kLogLo + i * h;
    const double t = std::exp(v);
    // t * e^{-lambda t} (2 pi t)^{-d/2} det(a)^{-1/2} exp(-q / 2t)
    const double e = v - lambda * t - 0.5 * d * std::log(2.0 * M_PI * t) - 0.5 * std::log(det) - q / (2.0 * t);
    s += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(e);
  }
  return h * s;
}

MollifiedGreen::MollifiedGreen(const GreenFunction& base, double eps, int grid) : base_(base), eps_(eps), n_(grid) {
  if (!(eps > 0.0)) throw ArgumentError("mollify_green: eps must be positive");
  if (grid < 16) throw ArgumentError("mollify_green: grid too small");
  const int d = base_.dim();
  const auto& prof = base_.profile();
  const double lam = prof.lambda();
  rho_ = eps * std::pow(base_.det_factor(), 1.0 / d);
  const double S = sphere_area(d);
  bump_norm_ = 1.0 / (S * gl_composite([&](double x) { return std::pow(x, d - 1) * raw_bump(x); }, 0.0, 1.0, 64, 16));

  h_ = rho_ / (n_ - 1);
  std::vector<double> panA(n_ - 1), panB(n_ - 1);
  const auto& gl = gauss_legendre(8);
  for (int p = 0; p < n_ - 1; ++p) {
    double sa = 0.0, sb = 0.0;
    const double lo = p * h_, mid = lo + 0.5 * h_;
    for (std::size_t q = 0; q < gl.x.size(); ++q) {
      const double r = mid + 0.5 * h_ * gl.x[q];
      const double base_w = gl.w[q] * 0.5 * h_ * S * std::pow(r, d - 1) * bump(r);
      sa += base_w * prof.regular(r);
      sb += base_w * prof.value(r);
    }
    panA[p] = sa;
    panB[p] = sb;
  }
  std::vector<double> cumA(n_, 0.0), cumB(n_, 0.0);
  for (int i = 1; i < n_; ++i) cumA[i] = cumA[i - 1] + panA[i - 1];
  for (int i = n_ - 2; i >= 0; --i) cumB[i] = cumB[i + 1] + panB[i];
  mass_ = cumA[n_ - 1];
  g_.resize(n_);
  g1_.resize(n_);
  g2_.resize(n_);
  for (int i = 0; i < n_; ++i) {
    const double r = i * h_;
    if (i == 0) {
      g_[i] = cumB[0];
      g1_[i] = 0.0;
      g2_[i] = (2.0 / d) * (lam * g_[i] - bump(0.0));
      continue;
    }
    g_[i] = prof.value(r) * cumA[i] + prof.regular(r) * cumB[i];
    g1_[i] = prof.derivative(r) * cumA[i] + prof.regular_derivative(r) * cumB[i];
    g2_[i] = 2.0 * (lam * g_[i] - bump(r)) - (d - 1) * g1_[i] / r;
  }
  // Truncation radius where M g(r) drops below 1e-12 of the peak.
  const double thresh = 1e-12 * g_[0];
  if (mass_ * prof.value(rho_) <= thresh) {
    r_cut_ = rho_;
  } else {
    double lo = rho_, hi = rho_ + 10.0 / prof.kappa();
    while (mass_ * prof.value(hi) > thresh) hi = rho_ + 2.0 * (hi - rho_);
    for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
      const double m = 0.5 * (lo + hi);
      (mass_ * prof.value(m) > thresh ? lo : hi) = m;
    }
    r_cut_ = hi;
  }
  peak_ = base_.det_factor() * g_[0];
}

double MollifiedGreen::bump(double r) const {
  return bump_norm_ * std::pow(rho_, -dim()) * raw_bump(std::abs(r) / rho_);
}

RadialSample MollifiedGreen::radial(double r) const {
  r = std::abs(r);
  RadialSample s;
  if (r >= r_cut_) return s;
  const int d = dim();
  const double lam = lambda();
  const auto& prof = base_.profile();
  if (r > rho_) {
    s.g = mass_ * prof.value(r);
    s.g1 = mass_ * prof.derivative(r);
    s.g2 = 2.0 * lam * s.g - (d - 1) * s.g1 / r;
    return s;
  }
  const double x = r / h_;
  const std::size_t i = std::min(static_cast<std::size_t>(x), static_cast<std::size_t>(n_ - 2));
  const double t = x - static_cast<double>(i);
  s.g = hermite(t, g_[i], g1_[i], g_[i + 1], g1_[i + 1], h_);
  s.g1 = hermite(t, g1_[i], g2_[i], g1_[i + 1], g2_[i + 1], h_);
  if (d == 1) {
    s.g2 = 2.0 * (lam * s.g - bump(r));
  } else {
    double over_r;
    if (r < h_) {
      over_r = g2_[0] + (g1_[1] / h_ - g2_[0]) * (r / h_);
    } else {
      over_r = s.g1 / r;
    }
    s.g2 = 2.0 * (lam * s.g - bump(r)) - (d - 1) * over_r;
  }
  return s;
}

double MollifiedGreen::centered(const double* z) const {
  return base_.det_factor() * radial(base_.whitened_norm(z)).g;
}

double MollifiedGreen::operator()(const Vec& x) const {
  if (x.size() != dim()) throw ArgumentError("MollifiedGreen: argument has the wrong dimension");
  const Vec z = x - base_.u();
  return centered(z.data());
}

double MollifiedGreen::value_grad_generator(const double* z, const double* B, double* grad, double* gen) const {
  const int d = dim();
  const Mat& W = base_.whitening();
  double w[3] = {0, 0, 0};
  double r2 = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) w[i] += W(i, j) * z[j];
    r2 += w[i] * w[i];
  }
  const double r = std::sqrt(r2);
  if (r >= r_cut_) {
    if (grad)
      for (int i = 0; i < d; ++i) grad[i] = 0.0;
    if (gen) *gen = 0.0;
    return 0.0;
  }
  const double D = base_.det_factor();
  const RadialSample s = radial(r);
  if (grad) {
    for (int i = 0; i < d; ++i) {
      double gi = 0.0;
      if (r > 0.0)
        for (int j = 0; j < d; ++j) gi += W(i, j) * w[j];
      grad[i] = r > 0.0 ? D * s.g1 * gi / r : 0.0;
    }
  }
  if (gen) {
    double trB = 0.0;
    for (int i = 0; i < d; ++i) trB += B[i * d + i];
    if (r == 0.0) {
      *gen = D * 0.5 * s.g2 * trB;
    } else {
      double wBw = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) wBw += w[i] * B[i * d + j] * w[j];
      wBw /= r2;
      const double over_r = (d > 1 && r < h_ && r <= rho_) ? g2_[0] + (g1_[1] / h_ - g2_[0]) * (r / h_) : s.g1 / r;
      *gen = D * 0.5 * (s.g2 * wBw + over_r * (trB - wBw));
    }
  }
  return D * s.g;
}

double MollifiedGreen::value_grad(const double* z, double* grad) const {
  return value_grad_generator(z, nullptr, grad, nullptr);
}

double MollifiedGreen::value_generator(const double* z, const double* B, double* gen) const {
  return value_grad_generator(z, B, nullptr, gen);
}

double MollifiedGreen::resolvent_applied(const double* z) const {
  return base_.det_factor() * bump(base_.whitened_norm(z));
}

double MollifiedGreen::l1_distance_to_base() const {
  const int d = dim();
  const double S = sphere_area(d);
  const auto& prof = base_.profile();
  auto inner = [&](double r) {
    if (r == 0.0) return 0.0;
    return S * std::pow(r, d - 1) * std::abs(radial(r).g - prof.value(r));
  };
  const double near = gl_composite(inner, 0.0, rho_, 256, 16);
  const double base_near =
      gl_composite([&](double r) { return r == 0.0 ? 0.0 : S * std::pow(r, d - 1) * prof.value(r); }, 0.0, rho_, 256, 16);
  const double tail_to_cut = 1.0 / lambda() - base_near;
  // beyond r_cut the truncated G_eps is zero
  const double beyond =
      gl_composite([&](double r) { return S * std::pow(r, d - 1) * prof.value(r); }, r_cut_, r_cut_ + 80.0 / prof.kappa(),
                   256, 16);
  return near + std::abs(mass_ - 1.0) * (tail_to_cut - beyond) + beyond;
}

double MollifiedGreen::integral() const {
  const int d = dim();
  const double S = sphere_area(d);
  auto f = [&](double r) { return S * std::pow(r, d - 1) * radial(r).g; };
  return gl_composite(f, 0.0, rho_, 256, 16) + gl_composite(f, rho_, r_cut_, 1024, 16);
}

Mat generator_in_whitened(const GreenFunction& base, const Mat& a) {
  return base.whitening() * a * base.whitening();
}

}  // namespace flowsilt
