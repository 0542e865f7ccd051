#pragma once

#include "flowsilt/gaussian.hpp"
#include "flowsilt/model.hpp"

#include <string>
#include <vector>

namespace flowsilt {

struct GammaOp {
  enum class Kind { Phi, Pi1 };
  Kind kind = Kind::Pi1;
  int i = 0, j = 0;  // Phi indices, relative to the unfrozen blocks (1-based)

  static GammaOp phi(int i, int j) { return {Kind::Phi, i, j}; }
  static GammaOp pi1() { return {Kind::Pi1, 0, 0}; }
};

// Q^{l0}_{s_1} op_1 Q_{s_2 - s_1} op_2 ... op_m Q_{s_{m+1} - s_m}, read left to right.
// Phi raises the number of moving blocks by one; pi1 freezes one block.
struct GammaExpr {
  int ell0 = 1;
  std::vector<GammaOp> ops;

  // Arity of the function the expression acts on; throws ExpressionError on a broken ledger.
  int input_arity() const;
  std::string to_string() const;
};

// times = (s_1, ..., s_m, s_{m+1}) nondecreasing, m = ops.size().  Returns a functional of
// arity ell0 in the initial positions.
GaussianFunctional gamma_evaluate(const CoefficientModel& model, const GammaExpr& expr, const GaussianFunctional& f,
                                  const std::vector<double>& times);

// One term of the order-k mixed moment: branches[p] coalescence events in the
// p-th observation interval (the last entry is always zero), starting from
// ell0 = k - sum(branches) initial points.  Each coalescence event sums over all
// unordered pairs of moving lineages.
struct MomentTerm {
  std::vector<int> branches;
  int ell0 = 1;
  int depth() const;  // number of time integrals
  std::string describe() const;
};

struct MomentFormula {
  int order = 1;
  std::vector<MomentTerm> terms;
};

MomentFormula moment_formula(int order);

struct MomentOptions {
  int nodes = 32;
  double rel_target = 1e-7;
  int max_nodes = 128;
  int threads = 1;
};

struct MomentResult {
  double value = 0.0;
  double error = 0.0;  // node-doubling estimate
  std::vector<double> term_values;
  std::vector<double> term_errors;
  int nodes = 0;
};

// E[<phi_1, mu_{t_1}> ... <phi_k, mu_{t_k}>] for a constant model, atomic mu0 and
// Gaussian-bump or unit test functions.  Times must be nondecreasing.
MomentResult mixed_moment(const CoefficientModel& model, const std::vector<TestFunction>& phis,
                          const std::vector<double>& times, const InitialMeasureSpec& mu0,
                          const MomentOptions& opts = {});

// Text listing of the term list with values when given.
std::string dump_terms(const MomentFormula& formula, const MomentResult* result = nullptr);

}  // namespace flowsilt
