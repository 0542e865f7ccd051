#include "flowsilt/model.hpp"

#include "flowsilt/error.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace flowsilt {

namespace {

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }

void check_dim(const Vec& x, int d, const char* what) {
  if (x.size() != d) {
    std::ostringstream os;
    os << what << ": expected dimension " << d << ", got " << x.size();
    throw ArgumentError(os.str());
  }
}

}  // namespace

CoefficientModel CoefficientModel::constant(Vec b, Mat c) {
  if (b.size() == 0 || c.rows() != b.size() || c.cols() == 0) {
    throw ArgumentError("constant model: b must be length d and c must be d x m");
  }
  if (!all_finite(b) || !all_finite(c)) throw ModelEvaluationError("constant model: non-finite coefficient");
  CoefficientModel m;
  m.dim_ = static_cast<int>(b.size());
  m.flow_dim_ = static_cast<int>(c.cols());
  m.kind_ = Kind::Constant;
  m.b_const_ = std::move(b);
  m.c_const_ = std::move(c);
  return m;
}

CoefficientModel CoefficientModel::callable(int dim, int flow_dim, DriftFn b, FlowFn c) {
  if (dim <= 0 || flow_dim <= 0) throw ArgumentError("callable model: dimensions must be positive");
  if (!b || !c) throw ArgumentError("callable model: b and c are required");
  CoefficientModel m;
  m.dim_ = dim;
  m.flow_dim_ = flow_dim;
  m.kind_ = Kind::Callable;
  m.b_fn_ = std::move(b);
  m.c_fn_ = std::move(c);
  return m;
}

CoefficientModel CoefficientModel::preset(std::string_view name) {
  if (name == "bm1d") return constant(Vec::Ones(1), Mat::Ones(1, 1));
  if (name == "flow3d") return constant(Vec::Unit(3, 0), Mat::Identity(3, 3));
  throw ArgumentError("unknown model preset '" + std::string(name) + "'");
}

Vec CoefficientModel::b(const Vec& x) const {
  if (kind_ == Kind::Constant) return b_const_;
  Vec v = b_fn_(x);
  if (v.size() != dim_ || !all_finite(v)) throw ModelEvaluationError("b(x) returned a non-finite or malformed value");
  return v;
}

Mat CoefficientModel::c(const Vec& x) const {
  if (kind_ == Kind::Constant) return c_const_;
  Mat v = c_fn_(x);
  if (v.rows() != dim_ || v.cols() != flow_dim_ || !all_finite(v)) {
    throw ModelEvaluationError("c(x) returned a non-finite or malformed value");
  }
  return v;
}

Coefficients evaluate_coefficients(const CoefficientModel& model, const Vec& x) {
  check_dim(x, model.dim(), "evaluate_coefficients");
  if (!all_finite(x)) throw ArgumentError("evaluate_coefficients: non-finite point");
  return {model.b(x), model.c(x)};
}

Mat sigma_matrix(const CoefficientModel& model, const Vec& x, const Vec& y) {
  return model.c(x) * model.c(y).transpose();
}

Mat a_matrix(const CoefficientModel& model, const Vec& x, const Vec& y, bool same_particle) {
  Mat a = sigma_matrix(model, x, y);
  if (same_particle) {
    Vec bx = model.b(x);
    Vec by = model.b(y);
    for (int i = 0; i < model.dim(); ++i) a(i, i) += bx(i) * by(i);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Initial measures

InitialMeasureSpec InitialMeasureSpec::atoms(std::vector<Atom> atoms) {
  if (atoms.empty()) throw ArgumentError("initial measure: at least one atom is required");
  InitialMeasureSpec s;
  s.is_atomic_ = true;
  const auto d = atoms.front().position.size();
  double total = 0.0;
  for (const auto& a : atoms) {
    if (a.position.size() != d || d == 0) throw ArgumentError("initial measure: atoms must share one dimension");
    if (!(a.mass > 0.0) || !std::isfinite(a.mass)) throw ArgumentError("initial measure: atom masses must be positive");
    if (!a.position.allFinite()) throw ArgumentError("initial measure: non-finite atom position");
    total += a.mass;
  }
  s.atoms_ = std::move(atoms);
  s.total_mass_ = total;
  return s;
}

InitialMeasureSpec InitialMeasureSpec::point_mass(const Vec& x, double mass) {
  return atoms({Atom{x, mass}});
}

InitialMeasureSpec InitialMeasureSpec::density(DensityFn density, Vec box_lo, Vec box_hi, double bound,
                                               double total_mass) {
  if (!density) throw ArgumentError("initial measure: density function required");
  if (box_lo.size() == 0 || box_lo.size() != box_hi.size()) throw ArgumentError("initial measure: malformed support box");
  if (((box_hi - box_lo).array() <= 0.0).any()) throw ArgumentError("initial measure: empty support box");
  if (!(bound > 0.0) || !std::isfinite(bound)) throw ArgumentError("initial measure: density bound must be positive and finite");
  if (!(total_mass > 0.0)) throw ArgumentError("initial measure: total mass must be positive");
  InitialMeasureSpec s;
  s.is_atomic_ = false;
  s.density_ = std::move(density);
  s.box_lo_ = std::move(box_lo);
  s.box_hi_ = std::move(box_hi);
  s.bound_ = bound;
  s.total_mass_ = total_mass;
  return s;
}

InitialMeasureSpec InitialMeasureSpec::uniform_box(Vec box_lo, Vec box_hi, double total_mass) {
  auto s = density([](const Vec&) { return 1.0; }, std::move(box_lo), std::move(box_hi), 1.0, total_mass);
  s.uniform_ = true;
  return s;
}

int InitialMeasureSpec::dim() const {
  return static_cast<int>(is_atomic_ ? atoms_.front().position.size() : box_lo_.size());
}

std::pair<Vec, Vec> InitialMeasureSpec::support_box() const {
  if (!is_atomic_) return {box_lo_, box_hi_};
  Vec lo = atoms_.front().position, hi = lo;
  for (const auto& a : atoms_) {
    lo = lo.cwiseMin(a.position);
    hi = hi.cwiseMax(a.position);
  }
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Test functions

TestFunction TestFunction::gaussian(Vec center, Mat inv_cov, double amplitude) {
  if (inv_cov.rows() != center.size() || inv_cov.cols() != center.size()) {
    throw ArgumentError("gaussian bump: inverse covariance must be d x d");
  }
  if (!inv_cov.isApprox(inv_cov.transpose(), 1e-12)) throw ArgumentError("gaussian bump: inverse covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(inv_cov);
  if (es.eigenvalues().minCoeff() <= 0.0) throw ArgumentError("gaussian bump: inverse covariance must be positive definite");
  return TestFunction(GaussianBump{std::move(center), std::move(inv_cov), amplitude});
}

TestFunction TestFunction::one() { return TestFunction(ConstantOne{}); }

TestFunction TestFunction::callable(std::function<double(const Vec&)> value, std::function<Vec(const Vec&)> gradient,
                                    std::function<Mat(const Vec&)> hessian, bool smooth) {
  if (!value) throw ArgumentError("callable test function: value function required");
  return TestFunction(Callable{std::move(value), std::move(gradient), std::move(hessian), smooth});
}

bool TestFunction::is_smooth() const {
  if (auto* c = std::get_if<Callable>(&form_)) return c->smooth;
  return true;
}

double TestFunction::value(const Vec& x) const {
  return std::visit(
      [&](const auto& f) -> double {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, GaussianBump>) {
          Vec z = x - f.center;
          return f.amplitude * std::exp(-0.5 * z.dot(f.inv_cov * z));
        } else if constexpr (std::is_same_v<T, ConstantOne>) {
          return 1.0;
        } else {
          return f.value(x);
        }
      },
      form_);
}

Vec TestFunction::gradient(const Vec& x) const {
  return std::visit(
      [&](const auto& f) -> Vec {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, GaussianBump>) {
          Vec z = x - f.center;
          return -value(x) * (f.inv_cov * z);
        } else if constexpr (std::is_same_v<T, ConstantOne>) {
          return Vec::Zero(x.size());
        } else {
          if (!f.smooth) throw UnsupportedError("test function is tagged non-smooth");
          if (f.gradient) return f.gradient(x);
          Vec g(x.size());
          for (int i = 0; i < x.size(); ++i) {
            const double h = fd_step(x(i));
            Vec xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            g(i) = (f.value(xp) - f.value(xm)) / (2 * h);
          }
          return g;
        }
      },
      form_);
}

Mat TestFunction::hessian(const Vec& x) const {
  return std::visit(
      [&](const auto& f) -> Mat {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, GaussianBump>) {
          Vec pz = f.inv_cov * (x - f.center);
          return value(x) * (pz * pz.transpose() - f.inv_cov);
        } else if constexpr (std::is_same_v<T, ConstantOne>) {
          return Mat::Zero(x.size(), x.size());
        } else {
          if (!f.smooth) throw UnsupportedError("test function is tagged non-smooth");
          if (f.hessian) return f.hessian(x);
          const int d = static_cast<int>(x.size());
          Mat hm(d, d);
          const double f0 = f.value(x);
          for (int i = 0; i < d; ++i) {
            const double hi = fd_step(x(i));
            Vec xp = x, xm = x;
            xp(i) += hi;
            xm(i) -= hi;
            hm(i, i) = (f.value(xp) - 2 * f0 + f.value(xm)) / (hi * hi);
            for (int j = 0; j < i; ++j) {
              const double hj = fd_step(x(j));
              Vec pp = x, pm = x, mp = x, mm = x;
              pp(i) += hi; pp(j) += hj;
              pm(i) += hi; pm(j) -= hj;
              mp(i) -= hi; mp(j) += hj;
              mm(i) -= hi; mm(j) -= hj;
              hm(i, j) = hm(j, i) = (f.value(pp) - f.value(pm) - f.value(mp) + f.value(mm)) / (4 * hi * hj);
            }
          }
          return hm;
        }
      },
      form_);
}

// ---------------------------------------------------------------------------
// Generators

double generator_L(const CoefficientModel& model, const TestFunction& f, const Vec& x) {
  check_dim(x, model.dim(), "generator_L");
  if (!f.is_smooth()) throw UnsupportedError("generator_L: test function is not twice differentiable");
  if (f.is_one()) return 0.0;
  const Mat a = a_matrix(model, x, x, true);
  return 0.5 * (a.cwiseProduct(f.hessian(x))).sum();
}

double generator_Ln(const CoefficientModel& model, const std::vector<TestFunction>& factors, const Mat& x) {
  const int n = static_cast<int>(factors.size());
  const int d = model.dim();
  if (x.rows() != n || x.cols() != d) throw ArgumentError("generator_Ln: x must be n x d");
  std::vector<Vec> pts(n);
  std::vector<double> val(n);
  std::vector<Vec> grad(n);
  for (int p = 0; p < n; ++p) {
    if (!factors[p].is_smooth()) throw UnsupportedError("generator_Ln: factor is not twice differentiable");
    pts[p] = x.row(p).transpose();
    val[p] = factors[p].value(pts[p]);
    grad[p] = factors[p].gradient(pts[p]);
  }
  auto others = [&](int p, int q) {
    double prod = 1.0;
    for (int r = 0; r < n; ++r)
      if (r != p && r != q) prod *= val[r];
    return prod;
  };
  double total = 0.0;
  for (int p = 0; p < n; ++p) {
    if (factors[p].is_one()) continue;
    const Mat a = a_matrix(model, pts[p], pts[p], true);
    total += 0.5 * a.cwiseProduct(factors[p].hessian(pts[p])).sum() * others(p, p);
    for (int q = 0; q < n; ++q) {
      if (q == p || factors[q].is_one()) continue;
      const Mat s = sigma_matrix(model, pts[p], pts[q]);
      total += 0.5 * grad[p].dot(s * grad[q]) * others(p, q);
    }
  }
  return total;
}

double generator_Ln(const CoefficientModel& model, const std::function<double(const Vec&)>& f, const Mat& x) {
  const int n = static_cast<int>(x.rows());
  const int d = model.dim();
  if (x.cols() != d) throw ArgumentError("generator_Ln: x must be n x d");
  Vec z(n * d);
  for (int p = 0; p < n; ++p) z.segment(p * d, d) = x.row(p).transpose();
  const double f0 = f(z);
  auto second = [&](int i, int j) {
    const double hi = fd_step(z(i)), hj = fd_step(z(j));
    if (i == j) {
      Vec zp = z, zm = z;
      zp(i) += hi;
      zm(i) -= hi;
      return (f(zp) - 2 * f0 + f(zm)) / (hi * hi);
    }
    Vec pp = z, pm = z, mp = z, mm = z;
    pp(i) += hi; pp(j) += hj;
    pm(i) += hi; pm(j) -= hj;
    mp(i) -= hi; mp(j) += hj;
    mm(i) -= hi; mm(j) -= hj;
    return (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * hi * hj);
  };
  double total = 0.0;
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      const Mat a = a_matrix(model, x.row(p).transpose(), x.row(q).transpose(), p == q);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          if (a(i, j) != 0.0) total += 0.5 * a(i, j) * second(p * d + i, q * d + j);
    }
  }
  return total;
}

double lambda_form(const CoefficientModel& model, const TestFunction& f, const Vec& x, const Vec& y) {
  check_dim(x, model.dim(), "lambda_form");
  check_dim(y, model.dim(), "lambda_form");
  if (f.is_one()) return 0.0;
  return f.gradient(x).dot(sigma_matrix(model, x, y) * f.gradient(y));
}

// ---------------------------------------------------------------------------
// Validation

ProbeGrid lattice_grid(const Vec& lo, const Vec& hi, int per_axis) {
  if (per_axis < 1 || lo.size() == 0 || lo.size() != hi.size()) throw ArgumentError("probe grid: malformed box");
  ProbeGrid g;
  g.per_axis = per_axis;
  g.lo = lo;
  g.hi = hi;
  const int d = static_cast<int>(lo.size());
  long total = 1;
  for (int i = 0; i < d; ++i) total *= per_axis;
  g.points.reserve(total);
  std::vector<int> idx(d, 0);
  for (long k = 0; k < total; ++k) {
    Vec p(d);
    for (int i = 0; i < d; ++i) {
      const double frac = per_axis == 1 ? 0.5 : double(idx[i]) / (per_axis - 1);
      p(i) = lo(i) + frac * (hi(i) - lo(i));
    }
    g.points.push_back(std::move(p));
    for (int i = 0; i < d; ++i) {
      if (++idx[i] < per_axis) break;
      idx[i] = 0;
    }
  }
  return g;
}

ProbeGrid default_probe_grid(const CoefficientModel& model, const InitialMeasureSpec& mu0, double horizon,
                             int per_axis) {
  auto [lo, hi] = mu0.support_box();
  if (lo.size() != model.dim()) throw ArgumentError("probe grid: initial measure dimension does not match model");
  const Vec center = 0.5 * (lo + hi);
  Eigen::SelfAdjointEigenSolver<Mat> es(a_matrix(model, center, center, true));
  const double sd = std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0) * std::max(horizon, 0.0));
  const double pad = std::max(3.0 * sd, 1e-6);
  return lattice_grid(lo.array() - pad, hi.array() + pad, per_axis);
}

ValidationReport validate_model(const CoefficientModel& model, const ProbeGrid& grid, const InitialMeasureSpec* mu0) {
  if (grid.points.empty()) throw ArgumentError("validate_model: probe grid is empty");
  ValidationReport r;
  r.min_eigenvalue = std::numeric_limits<double>::infinity();
  const int d = model.dim();
  std::vector<Vec> bs;
  std::vector<Mat> cs;
  bs.reserve(grid.points.size());
  cs.reserve(grid.points.size());
  for (const auto& p : grid.points) {
    auto co = evaluate_coefficients(model, p);
    Mat a = co.c * co.c.transpose();
    for (int i = 0; i < d; ++i) a(i, i) += co.b(i) * co.b(i);
    Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
    const double ev = es.eigenvalues().minCoeff();
    if (ev < r.min_eigenvalue) {
      r.min_eigenvalue = ev;
      r.argmin = p;
    }
    bs.push_back(std::move(co.b));
    cs.push_back(std::move(co.c));
  }
  // Neighbouring lattice points along each axis.
  if (grid.per_axis > 1) {
    long stride = 1;
    for (int axis = 0; axis < d; ++axis) {
      for (std::size_t k = 0; k < grid.points.size(); ++k) {
        const long coord = (long(k) / stride) % grid.per_axis;
        if (coord + 1 >= grid.per_axis) continue;
        const std::size_t nb = k + stride;
        const double dist = (grid.points[nb] - grid.points[k]).norm();
        if (dist <= 0.0) continue;
        r.lipschitz_b = std::max(r.lipschitz_b, (bs[nb] - bs[k]).norm() / dist);
        r.lipschitz_c = std::max(r.lipschitz_c, (cs[nb] - cs[k]).norm() / dist);
      }
      stride *= grid.per_axis;
    }
  }
  if (mu0 != nullptr && !mu0->is_atomic()) {
    bool ok = true;
    double mx = 0.0;
    for (const auto& p : grid.points) {
      if (((p - mu0->box_lo()).array() < 0.0).any() || ((mu0->box_hi() - p).array() < 0.0).any()) continue;
      const double v = mu0->density_fn()(p);
      if (!std::isfinite(v) || v < 0.0 || v > mu0->density_bound()) ok = false;
      if (std::isfinite(v)) mx = std::max(mx, v);
    }
    r.density_bounded = ok;
    r.density_max = mx;
  }
  r.passed = r.min_eigenvalue >= kEllipticityFloor;
  if (!r.passed) r.violated = "uniform ellipticity";
  return r;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " min_eigenvalue=" << min_eigenvalue << " lipschitz_b~" << lipschitz_b
     << " lipschitz_c~" << lipschitz_c;
  if (density_bounded) os << " density_bounded=" << (*density_bounded ? "yes" : "no");
  if (!violated.empty()) os << " violated=" << violated;
  return os.str();
}

void require_valid(const ValidationReport& report) {
  if (report.passed) return;
  std::ostringstream os;
  os << "model validation failed: " << report.violated << " (min eigenvalue of a(x,x) = " << report.min_eigenvalue
     << ", floor " << kEllipticityFloor << ")";
  throw ValidationError(os.str());
}

}  // namespace flowsilt
