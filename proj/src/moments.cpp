#include "flowsilt/moments.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/parallel.hpp"
#include "flowsilt/quadrature.hpp"
#include "flowsilt/stats.hpp"

#include <cmath>
#include <sstream>

namespace flowsilt {

int GammaExpr::input_arity() const {
  if (ell0 < 1) throw ExpressionError("GammaExpr: ell0 must be >= 1 (stage 0)");
  int moving = ell0, frozen = 0;
  for (std::size_t p = 0; p < ops.size(); ++p) {
    const auto& op = ops[p];
    if (op.kind == GammaOp::Kind::Phi) {
      ++moving;
      if (op.i < 1 || op.i > moving - 1 || op.j < 1 || op.j > moving || op.i == op.j)
        throw ExpressionError("GammaExpr: Phi indices out of range at stage " + std::to_string(p + 1));
    } else {
      if (moving < 2) throw ExpressionError("GammaExpr: pi1 needs two moving blocks at stage " + std::to_string(p + 1));
      --moving;
      ++frozen;
    }
  }
  return moving + frozen;
}

std::string GammaExpr::to_string() const {
  std::ostringstream os;
  int moving = ell0;
  os << "Q^" << moving << "_{s1}";
  for (std::size_t p = 0; p < ops.size(); ++p) {
    const auto& op = ops[p];
    if (op.kind == GammaOp::Kind::Phi) {
      os << " Φ" << op.i << op.j;
      ++moving;
    } else {
      os << " π1";
      --moving;
    }
    os << " Q^" << moving << "_{s" << p + 2 << "-s" << p + 1 << "}";
  }
  return os.str();
}

GaussianFunctional gamma_evaluate(const CoefficientModel& model, const GammaExpr& expr, const GaussianFunctional& f,
                                  const std::vector<double>& times) {
  const int in = expr.input_arity();
  if (f.arity() != in)
    throw ExpressionError("gamma_evaluate: input arity " + std::to_string(f.arity()) + " but the expression needs " +
                          std::to_string(in) + " (stage " + std::to_string(expr.ops.size() + 1) + ")");
  const std::size_t m = expr.ops.size();
  if (times.size() != m + 1) throw ArgumentError("gamma_evaluate: need ops.size() + 1 times");
  for (std::size_t p = 0; p < times.size(); ++p)
    if (times[p] < 0.0 || (p > 0 && times[p] < times[p - 1]))
      throw ArgumentError("gamma_evaluate: times must be nonnegative and nondecreasing");
  int frozen = 0;
  for (const auto& op : expr.ops)
    if (op.kind == GammaOp::Kind::Pi1) ++frozen;
  GaussianFunctional g = f;
  for (std::size_t p = m; p >= 1; --p) {
    g = semigroup_apply(model, g, times[p] - times[p - 1], frozen);
    const auto& op = expr.ops[p - 1];
    if (op.kind == GammaOp::Kind::Phi) {
      g = diagonal_restrict(g, frozen + op.i, frozen + op.j);
    } else {
      --frozen;
    }
  }
  g = semigroup_apply(model, g, times[0], 0);
  if (g.arity() != expr.ell0) throw ExpressionError("gamma_evaluate: arity ledger mismatch at stage 0");
  return g;
}

int MomentTerm::depth() const {
  int s = 0;
  for (int c : branches) s += c;
  return s;
}

std::string MomentTerm::describe() const {
  std::ostringstream os;
  const int k = static_cast<int>(branches.size());
  int moving = ell0, sidx = 0;
  std::string prev = "0";
  auto q = [&](const std::string& cur) {
    os << "Q^" << moving << "_{" << (prev == "0" ? cur : cur + "-" + prev) << "}";
    prev = cur;
  };
  for (int p = 0; p < k; ++p) {
    for (int c = 0; c < branches[p]; ++c) {
      q("s" + std::to_string(++sidx));
      os << " Σ*Φ ";
      ++moving;
    }
    q("t" + std::to_string(p + 1));
    if (p + 1 < k) {
      os << " π1 ";
      --moving;
    }
  }
  return os.str();
}

MomentFormula moment_formula(int order) {
  if (order < 1 || order > 4) throw ArgumentError("moment_formula: order must be 1..4");
  MomentFormula mf;
  mf.order = order;
  std::vector<int> c(static_cast<std::size_t>(order), 0);
  // Enumerate branch counts with c_k = 0, ell0 >= 1 and at least two moving
  // blocks at each intermediate observation.
  auto rec = [&](auto&& self, int p, int used) -> void {
    if (p == order - 1) {
      const int ell0 = order - used;
      if (ell0 < 1) return;
      int moving = ell0;
      for (int q = 0; q < order - 1; ++q) {
        moving += c[q];
        if (moving < 2) return;
        --moving;
      }
      MomentTerm t;
      t.branches = c;
      t.ell0 = ell0;
      mf.terms.push_back(t);
      return;
    }
    for (int v = 0; v + used <= order - 1; ++v) {
      c[p] = v;
      self(self, p + 1, used + v);
    }
    c[p] = 0;
  };
  rec(rec, 0, 0);
  return mf;
}

namespace {

struct Event {
  bool branch;
  int interval;  // 0-based observation interval
};

class TermEvaluator {
 public:
  TermEvaluator(const CoefficientModel& model, const InitialMeasureSpec& mu0, const std::vector<double>& times,
                const MomentTerm& term, int nodes)
      : model_(model), mu0_(mu0), times_(times), rule_(gauss_legendre(nodes)) {
    const int k = static_cast<int>(times.size());
    for (int p = 0; p < k; ++p) {
      for (int c = 0; c < term.branches[p]; ++c) events_.push_back({true, p});
      if (p + 1 < k) events_.push_back({false, p});
    }
  }

  double run(const GaussianFunctional& f) {
    const int k = static_cast<int>(times_.size());
    return rec(static_cast<int>(events_.size()) - 1, f, k - 1, times_.back());
  }

 private:
  double rec(int idx, const GaussianFunctional& f, int frozen, double tcur) const {
    if (idx < 0) return integrate_product_measure(semigroup_apply(model_, f, tcur, 0), mu0_);
    const Event& e = events_[static_cast<std::size_t>(idx)];
    if (!e.branch) {
      const double tp = times_[static_cast<std::size_t>(e.interval)];
      return rec(idx - 1, semigroup_apply(model_, f, tcur - tp, frozen), frozen - 1, tp);
    }
    const double lo = e.interval == 0 ? 0.0 : times_[static_cast<std::size_t>(e.interval - 1)];
    if (!(tcur > lo)) return 0.0;
    const double half = 0.5 * (tcur - lo), mid = 0.5 * (tcur + lo);
    std::vector<double> parts;
    parts.reserve(rule_.x.size());
    for (std::size_t q = 0; q < rule_.x.size(); ++q) {
      const double s = mid + half * rule_.x[q];
      const GaussianFunctional g = semigroup_apply(model_, f, tcur - s, frozen);
      const int mv = g.arity() - frozen;
      double acc = 0.0;
      for (int i = 1; i <= mv; ++i)
        for (int j = i + 1; j <= mv; ++j) acc += rec(idx - 1, diagonal_restrict(g, frozen + i, frozen + j), frozen, s);
      if (!std::isfinite(acc))
        throw IntegrationError("mixed_moment: non-finite integrand at s = " + format_double(s));
      parts.push_back(half * rule_.w[q] * acc);
    }
    return pairwise_sum(parts);
  }

  const CoefficientModel& model_;
  const InitialMeasureSpec& mu0_;
  const std::vector<double>& times_;
  const GaussLegendre& rule_;
  std::vector<Event> events_;
};

}  // namespace

MomentResult mixed_moment(const CoefficientModel& model, const std::vector<TestFunction>& phis,
                          const std::vector<double>& times, const InitialMeasureSpec& mu0, const MomentOptions& opts) {
  const int k = static_cast<int>(phis.size());
  if (k < 1 || k > 4) throw ArgumentError("mixed_moment: order must be 1..4");
  if (times.size() != phis.size()) throw ArgumentError("mixed_moment: one time per test function");
  for (int p = 0; p < k; ++p)
    if (times[p] < 0.0 || (p > 0 && times[p] < times[p - 1]))
      throw ArgumentError("mixed_moment: times must be nonnegative and nondecreasing");
  if (!model.is_constant()) throw UnsupportedError("moment oracle requires a constant-coefficient model");
  if (!mu0.is_atomic()) throw UnsupportedError("moment oracle integrates against atomic initial measures only");
  if (mu0.dim() != model.dim()) throw ArgumentError("mixed_moment: mu0 dimension mismatch");

  std::vector<GaussianFunctional> factors;
  for (const auto& phi : phis) factors.push_back(GaussianFunctional::from_test(phi, model.dim()));
  const GaussianFunctional f = GaussianFunctional::tensor(factors);
  const MomentFormula mf = moment_formula(k);

  auto eval_all = [&](int nodes) {
    return parallel_map(mf.terms.size(), resolve_threads(opts.threads), [&](std::size_t i) {
      TermEvaluator ev(model, mu0, times, mf.terms[i], nodes);
      return ev.run(f);
    });
  };

  MomentResult r;
  std::vector<double> coarse = eval_all(std::max(1, opts.nodes / 2));
  for (int n = opts.nodes;; n *= 2) {
    std::vector<double> fine = eval_all(n);
    r.term_values = fine;
    r.term_errors.assign(fine.size(), 0.0);
    for (std::size_t i = 0; i < fine.size(); ++i) r.term_errors[i] = std::abs(fine[i] - coarse[i]);
    r.value = pairwise_sum(fine);
    r.error = pairwise_sum(r.term_errors);
    r.nodes = n;
    if (r.error <= opts.rel_target * std::abs(r.value) || r.error == 0.0 || n * 2 > opts.max_nodes) break;
    coarse = std::move(fine);
  }
  return r;
}

std::string dump_terms(const MomentFormula& formula, const MomentResult* result) {
  std::ostringstream os;
  os << "order " << formula.order << ": " << formula.terms.size() << " terms\n";
  os << "# each Σ*Φ sums Φij over unordered pairs i<j of moving lineages, coefficient 1\n";
  for (std::size_t i = 0; i < formula.terms.size(); ++i) {
    const auto& t = formula.terms[i];
    os << "[" << i << "] mu0^" << t.ell0 << " depth " << t.depth() << "  " << t.describe();
    if (result && i < result->term_values.size()) os << "  = " << format_double(result->term_values[i]);
    os << "\n";
  }
  if (result) os << "total = " << format_double(result->value) << " (err " << format_double(result->error) << ")\n";
  return os.str();
}

}  // namespace flowsilt
