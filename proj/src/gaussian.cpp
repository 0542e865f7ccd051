#include "flowsilt/gaussian.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/stats.hpp"

#include <cmath>
#include <limits>

namespace flowsilt {

GaussianFunctional::GaussianFunctional(int arity, int dim, double coeff, Mat precision, Vec linear)
    : arity_(arity), dim_(dim), coeff_(coeff), P_(std::move(precision)), h_(std::move(linear)) {
  if (arity < 0 || dim < 1) throw ArgumentError("GaussianFunctional: bad arity or dimension");
  const int n = arity * dim;
  if (P_.rows() != n || P_.cols() != n || h_.size() != n)
    throw ArgumentError("GaussianFunctional: precision/linear size does not match arity * dim");
}

GaussianFunctional GaussianFunctional::one(int arity, int dim) {
  const int n = arity * dim;
  return GaussianFunctional(arity, dim, 1.0, Mat::Zero(n, n), Vec::Zero(n));
}

GaussianFunctional GaussianFunctional::from_test(const TestFunction& f, int dim) {
  if (f.is_one()) return one(1, dim);
  if (!f.is_gaussian()) throw UnsupportedError("oracle supports Gaussian bumps and the constant one only");
  const auto& g = f.bump();
  if (g.center.size() != dim) throw ArgumentError("test function dimension mismatch");
  const Vec h = g.inv_cov * g.center;
  const double c = g.amplitude * std::exp(-0.5 * g.center.dot(h));
  return GaussianFunctional(1, dim, c, g.inv_cov, h);
}

GaussianFunctional GaussianFunctional::tensor(const std::vector<GaussianFunctional>& factors) {
  if (factors.empty()) throw ArgumentError("tensor of no factors");
  const int d = factors.front().dim();
  int arity = 0;
  for (const auto& f : factors) {
    if (f.dim() != d) throw ArgumentError("tensor factors differ in dimension");
    arity += f.arity();
  }
  const int n = arity * d;
  Mat P = Mat::Zero(n, n);
  Vec h = Vec::Zero(n);
  double c = 1.0;
  int off = 0;
  for (const auto& f : factors) {
    const int m = f.size();
    P.block(off, off, m, m) = f.precision();
    h.segment(off, m) = f.linear();
    c *= f.coeff();
    off += m;
  }
  return GaussianFunctional(arity, d, c, std::move(P), std::move(h));
}

bool GaussianFunctional::is_constant() const {
  return P_.size() == 0 || (P_.cwiseAbs().maxCoeff() == 0.0 && h_.cwiseAbs().maxCoeff() == 0.0);
}

double GaussianFunctional::log_value(const Vec& x) const {
  if (x.size() != size()) throw ArgumentError("GaussianFunctional::value: argument size mismatch");
  if (size() == 0) return std::log(coeff_);
  return std::log(coeff_) - 0.5 * x.dot(P_ * x) + h_.dot(x);
}

double GaussianFunctional::value(const Vec& x) const {
  if (x.size() != size()) throw ArgumentError("GaussianFunctional::value: argument size mismatch");
  if (size() == 0) return coeff_;
  return coeff_ * std::exp(-0.5 * x.dot(P_ * x) + h_.dot(x));
}

double GaussianFunctional::sup_norm() const {
  if (size() == 0 || is_constant()) return std::abs(coeff_);
  Eigen::SelfAdjointEigenSolver<Mat> es(P_);
  const Vec lam = es.eigenvalues();
  const Vec q = es.eigenvectors().transpose() * h_;
  const double tol = 1e-12 * std::max(1.0, lam.cwiseAbs().maxCoeff());
  double expo = 0.0;
  for (int i = 0; i < lam.size(); ++i) {
    if (lam[i] > tol) {
      expo += 0.5 * q[i] * q[i] / lam[i];
    } else if (std::abs(q[i]) > 1e-12 * std::max(1.0, h_.cwiseAbs().maxCoeff())) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return std::abs(coeff_) * std::exp(expo);
}

Mat flow_covariance(const CoefficientModel& model, int arity, int frozen) {
  if (!model.is_constant()) throw UnsupportedError("moment oracle requires a constant-coefficient model");
  if (frozen < 0 || frozen > arity) throw ArgumentError("flow_covariance: frozen count out of range");
  const int d = model.dim();
  const Mat sigma = model.c_constant() * model.c_constant().transpose();
  Mat a = sigma;
  for (int i = 0; i < d; ++i) a(i, i) += model.b_constant()[i] * model.b_constant()[i];
  Mat A = Mat::Zero(arity * d, arity * d);
  for (int p = frozen; p < arity; ++p)
    for (int q = frozen; q < arity; ++q) A.block(p * d, q * d, d, d) = (p == q) ? a : sigma;
  return A;
}

GaussianFunctional semigroup_apply(const CoefficientModel& model, const GaussianFunctional& f, double t, int frozen) {
  if (!model.is_constant()) throw UnsupportedError("moment oracle requires a constant-coefficient model");
  if (!(t >= 0.0)) throw ArgumentError("semigroup_apply: t must be >= 0");
  if (f.dim() != model.dim()) throw ArgumentError("semigroup_apply: dimension mismatch");
  if (t == 0.0 || f.is_constant() || frozen >= f.arity()) return f;
  const int n = f.size();
  const Mat S = t * flow_covariance(model, f.arity(), frozen);
  const Mat& P = f.precision();
  const Mat M = Mat::Identity(n, n) + S * P;
  Eigen::PartialPivLU<Mat> lu(M);
  // P' = P M^{-1}; h' = M^{-T} h
  Mat Pn = lu.transpose().solve(P);  // M^{-T} P, equal to P M^{-1} by symmetry
  Pn = 0.5 * (Pn + Pn.transpose()).eval();
  const Vec hn = lu.transpose().solve(f.linear());
  const double logdet = std::log(std::abs(lu.determinant()));
  const double lc = -0.5 * logdet + 0.5 * f.linear().dot(S * hn);
  return GaussianFunctional(f.arity(), f.dim(), f.coeff() * std::exp(lc), std::move(Pn), hn);
}

Mat diagonal_embedding(int m, int dim, int i, int j) {
  if (m < 2 || i < 1 || i > m - 1 || j < 1 || j > m || i == j)
    throw ArgumentError("diagonal_restrict: need 1 <= i <= m-1, 1 <= j <= m, i != j (m=" + std::to_string(m) +
                        ", i=" + std::to_string(i) + ", j=" + std::to_string(j) + ")");
  Mat E = Mat::Zero(m * dim, (m - 1) * dim);
  for (int q = 1; q <= m; ++q) {
    const int src = q < j ? q : (q == j ? i : q - 1);
    E.block((q - 1) * dim, (src - 1) * dim, dim, dim).setIdentity();
  }
  return E;
}

GaussianFunctional diagonal_restrict(const GaussianFunctional& f, int i, int j) {
  const Mat E = diagonal_embedding(f.arity(), f.dim(), i, j);
  Mat P = E.transpose() * f.precision() * E;
  Vec h = E.transpose() * f.linear();
  return GaussianFunctional(f.arity() - 1, f.dim(), f.coeff(), std::move(P), std::move(h));
}

FrozenStage project_first(const GaussianFunctional& f, int frozen) {
  if (f.arity() - frozen < 2) throw ArgumentError("project_first: need at least two unfrozen blocks");
  return FrozenStage{f, frozen + 1};
}

GaussianFunctional semigroup_apply(const CoefficientModel& model, const FrozenStage& stage, double t) {
  return semigroup_apply(model, stage.f, t, stage.frozen);
}

double integrate_product_measure(const GaussianFunctional& f, const InitialMeasureSpec& mu0) {
  if (!mu0.is_atomic()) throw UnsupportedError("moment oracle integrates against atomic initial measures only");
  const auto& atoms = mu0.atom_list();
  const int k = f.arity(), d = f.dim();
  if (k == 0) return f.coeff();
  if (atoms.empty()) return 0.0;
  if (f.is_constant()) return f.coeff() * std::pow(mu0.total_mass(), k);
  const std::size_t A = atoms.size();
  std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
  std::vector<double> terms;
  Vec x(k * d);
  for (;;) {
    double w = 1.0;
    for (int p = 0; p < k; ++p) {
      x.segment(p * d, d) = atoms[idx[p]].position;
      w *= atoms[idx[p]].mass;
    }
    terms.push_back(w * f.value(x));
    int p = k - 1;
    while (p >= 0 && ++idx[p] == A) idx[p--] = 0;
    if (p < 0) break;
  }
  return pairwise_sum(terms);
}

}  // namespace flowsilt
