#pragma once

#include "flowsilt/model.hpp"

#include <string>

namespace flowsilt {

// f(x) = coeff * exp(-1/2 x^T P x + h^T x) on R^{k d}, x stacked block by block.
// P is symmetric PSD; zero rows of P are exact constant directions.
class GaussianFunctional {
 public:
  GaussianFunctional() = default;
  GaussianFunctional(int arity, int dim, double coeff, Mat precision, Vec linear);

  static GaussianFunctional one(int arity, int dim);
  // Arity-1 functional of a Gaussian bump or the constant one.
  static GaussianFunctional from_test(const TestFunction& f, int dim);
  static GaussianFunctional tensor(const std::vector<GaussianFunctional>& factors);

  int arity() const { return arity_; }
  int dim() const { return dim_; }
  int size() const { return arity_ * dim_; }
  double coeff() const { return coeff_; }
  const Mat& precision() const { return P_; }
  const Vec& linear() const { return h_; }
  bool is_constant() const;

  double value(const Vec& x) const;
  double log_value(const Vec& x) const;
  // Supremum over R^{kd}; +inf when unbounded.
  double sup_norm() const;

 private:
  int arity_ = 0;
  int dim_ = 0;
  double coeff_ = 1.0;
  Mat P_;
  Vec h_;
};

// Flow covariance A^{(l)}: diagonal blocks a(x, x), off-diagonal blocks sigma.
// Rows and columns of the first `frozen` blocks are zero.
Mat flow_covariance(const CoefficientModel& model, int arity, int frozen = 0);

// Q^l_t f with the first `frozen` blocks held fixed.
GaussianFunctional semigroup_apply(const CoefficientModel& model, const GaussianFunctional& f, double t,
                                   int frozen = 0);

// Linear embedding R^{(m-1)d} -> R^{md} used by Phi_ij (1-based, i <= m-1, j <= m, i != j):
// slot q < j reads x_q, slot j reads x_i, slot q > j reads x_{q-1}.
Mat diagonal_embedding(int m, int dim, int i, int j);

// (Phi_ij f)(x_1..x_{m-1}) = f(E x).
GaussianFunctional diagonal_restrict(const GaussianFunctional& f, int i, int j);

// pi_1 stage: the first block becomes a parameter.  Semigroup applications made
// through the stage see one more frozen block.
struct FrozenStage {
  GaussianFunctional f;
  int frozen = 0;
};
FrozenStage project_first(const GaussianFunctional& f, int frozen = 0);
GaussianFunctional semigroup_apply(const CoefficientModel& model, const FrozenStage& stage, double t);

// <f, mu0^{(x) k}> for atomic mu0.
double integrate_product_measure(const GaussianFunctional& f, const InitialMeasureSpec& mu0);

}  // namespace flowsilt
