#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace flowsilt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kEllipticityFloor = 1e-8;

// Coefficients of dY = b(Y) dB + c(Y) dW, with b acting componentwise on the
// particle's own Brownian motion and c (d x m) on the shared flow noise.
class CoefficientModel {
 public:
  enum class Kind { Constant, Callable };
  using DriftFn = std::function<Vec(const Vec&)>;
  using FlowFn = std::function<Mat(const Vec&)>;

  static CoefficientModel constant(Vec b, Mat c);
  static CoefficientModel callable(int dim, int flow_dim, DriftFn b, FlowFn c);
  // "bm1d": d=1, b=1, c=1.  "flow3d": d=3, b=e1, c=I.
  static CoefficientModel preset(std::string_view name);

  int dim() const { return dim_; }
  int flow_dim() const { return flow_dim_; }
  Kind kind() const { return kind_; }
  bool is_constant() const { return kind_ == Kind::Constant; }

  // Stored constants; only meaningful for Kind::Constant.
  const Vec& b_constant() const { return b_const_; }
  const Mat& c_constant() const { return c_const_; }

  Vec b(const Vec& x) const;
  Mat c(const Vec& x) const;

 private:
  CoefficientModel() = default;
  int dim_ = 0;
  int flow_dim_ = 0;
  Kind kind_ = Kind::Constant;
  Vec b_const_;
  Mat c_const_;
  DriftFn b_fn_;
  FlowFn c_fn_;
};

struct Coefficients {
  Vec b;
  Mat c;
};

Coefficients evaluate_coefficients(const CoefficientModel& model, const Vec& x);

// sigma(x, y) = c(x) c(y)^T
Mat sigma_matrix(const CoefficientModel& model, const Vec& x, const Vec& y);

// same_particle: delta_ij b_i(x) b_j(y) + sigma_ij(x, y); otherwise sigma only.
Mat a_matrix(const CoefficientModel& model, const Vec& x, const Vec& y, bool same_particle);

struct Atom {
  Vec position;
  double mass = 0.0;
};

class InitialMeasureSpec {
 public:
  using DensityFn = std::function<double(const Vec&)>;

  static InitialMeasureSpec atoms(std::vector<Atom> atoms);
  static InitialMeasureSpec point_mass(const Vec& x, double mass = 1.0);
  // Density proportional to `density` on the box, rescaled to total_mass.
  // `bound` is an upper bound of the unnormalized density used for rejection sampling.
  static InitialMeasureSpec density(DensityFn density, Vec box_lo, Vec box_hi, double bound,
                                    double total_mass);
  static InitialMeasureSpec uniform_box(Vec box_lo, Vec box_hi, double total_mass);

  bool is_atomic() const { return is_atomic_; }
  int dim() const;
  double total_mass() const { return total_mass_; }
  const std::vector<Atom>& atom_list() const { return atoms_; }
  const DensityFn& density_fn() const { return density_; }
  double density_bound() const { return bound_; }
  const Vec& box_lo() const { return box_lo_; }
  const Vec& box_hi() const { return box_hi_; }
  bool is_uniform() const { return uniform_; }

  // Bounding box of the support (atoms or density box).
  std::pair<Vec, Vec> support_box() const;

 private:
  bool is_atomic_ = true;
  bool uniform_ = false;
  std::vector<Atom> atoms_;
  DensityFn density_;
  Vec box_lo_, box_hi_;
  double bound_ = 0.0;
  double total_mass_ = 0.0;
};

// Test functions on R^d.  Gaussian bumps carry analytic derivatives; callables
// may supply them or fall back on central differences.
class TestFunction {
 public:
  struct GaussianBump {
    Vec center;
    Mat inv_cov;
    double amplitude = 1.0;
  };
  struct ConstantOne {};
  struct Callable {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;  // optional
    std::function<Mat(const Vec&)> hessian;   // optional
    bool smooth = true;
  };

  static TestFunction gaussian(Vec center, Mat inv_cov, double amplitude = 1.0);
  static TestFunction one();
  static TestFunction callable(std::function<double(const Vec&)> value,
                               std::function<Vec(const Vec&)> gradient = {},
                               std::function<Mat(const Vec&)> hessian = {}, bool smooth = true);

  bool is_gaussian() const { return std::holds_alternative<GaussianBump>(form_); }
  bool is_one() const { return std::holds_alternative<ConstantOne>(form_); }
  bool is_smooth() const;
  const GaussianBump& bump() const { return std::get<GaussianBump>(form_); }

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  Mat hessian(const Vec& x) const;

 private:
  explicit TestFunction(std::variant<GaussianBump, ConstantOne, Callable> f) : form_(std::move(f)) {}
  std::variant<GaussianBump, ConstantOne, Callable> form_;
};

inline double fd_step(double x) { return 1e-4 * (1.0 + std::abs(x)); }

// (L f)(x) = 1/2 sum_ij a_ij(x, x) d_ij f(x)
double generator_L(const CoefficientModel& model, const TestFunction& f, const Vec& x);

// n-particle generator on a product function f_1 (x) ... (x) f_n, x given as n x d rows.
double generator_Ln(const CoefficientModel& model, const std::vector<TestFunction>& factors,
                    const Mat& x);
// n-particle generator on a general function of the stacked coordinates (central differences).
double generator_Ln(const CoefficientModel& model, const std::function<double(const Vec&)>& f,
                    const Mat& x);

// (Lambda f)(x, y) = sum_ij sigma_ij(x, y) d_i f(x) d_j f(y)
double lambda_form(const CoefficientModel& model, const TestFunction& f, const Vec& x, const Vec& y);

struct ProbeGrid {
  std::vector<Vec> points;
  int per_axis = 0;
  Vec lo, hi;
};

// Lattice with `per_axis`^d points over the support box of mu0 inflated by
// three diffusion standard deviations at the horizon.
ProbeGrid default_probe_grid(const CoefficientModel& model, const InitialMeasureSpec& mu0,
                             double horizon, int per_axis = 11);
ProbeGrid lattice_grid(const Vec& lo, const Vec& hi, int per_axis);

struct ValidationReport {
  bool passed = false;
  double min_eigenvalue = 0.0;
  Vec argmin;
  double lipschitz_b = 0.0;
  double lipschitz_c = 0.0;
  std::optional<bool> density_bounded;  // empty for atomic initial measures
  double density_max = 0.0;
  std::string violated;  // name of the failing assumption, empty on pass
  std::string summary() const;
};

// Probe-grid diagnostics.  The Lipschitz figures are heuristic estimates over
// neighbouring lattice points, not certificates.
ValidationReport validate_model(const CoefficientModel& model, const ProbeGrid& grid,
                                const InitialMeasureSpec* mu0 = nullptr);

// Throws ValidationError naming the violated assumption when the report failed.
void require_valid(const ValidationReport& report);

}  // namespace flowsilt
