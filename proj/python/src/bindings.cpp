#include "flowsilt/config.hpp"
#include "flowsilt/error.hpp"
#include "flowsilt/genealogy.hpp"
#include "flowsilt/green.hpp"
#include "flowsilt/harness.hpp"
#include "flowsilt/moments.hpp"
#include "flowsilt/particles.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace flowsilt;

namespace {

CoefficientModel model_of(const std::string& preset) { return CoefficientModel::preset(preset); }

TestFunction make_test(const py::object& spec, int dim) {
  if (spec.is_none()) return TestFunction::one();
  const auto d = spec.cast<py::dict>();
  Vec c = Vec::Zero(dim);
  if (d.contains("center")) {
    const auto v = d["center"].cast<std::vector<double>>();
    if (int(v.size()) != dim) throw ArgumentError("center has the wrong dimension");
    c = Eigen::Map<const Vec>(v.data(), dim);
  }
  const double width = d.contains("width") ? d["width"].cast<double>() : 1.0;
  const double amp = d.contains("amplitude") ? d["amplitude"].cast<double>() : 1.0;
  return TestFunction::gaussian(c, Mat::Identity(dim, dim) / (width * width), amp);
}

}  // namespace

PYBIND11_MODULE(_flowsilt, m) {
  m.doc() = "Branching particle systems in a common noise field: simulation, moments, self-intersection estimators";
  py::register_exception<Error>(m, "FlowsiltError");

  m.def(
      "terminal_masses",
      [](const std::string& preset, int n, int substeps, double horizon, int replicates, std::uint64_t seed,
         int threads) {
        SimSpec s;
        s.model = model_of(preset);
        s.mu0 = InitialMeasureSpec::point_mass(Vec::Zero(s.model.dim()));
        s.n = n;
        s.substeps = substeps;
        s.horizon = horizon;
        s.seed = seed;
        py::gil_scoped_release release;
        return sample_terminal_mass(s, replicates, threads);
      },
      py::arg("preset") = "bm1d", py::arg("n") = 100, py::arg("substeps") = 1, py::arg("horizon") = 1.0,
      py::arg("replicates") = 100, py::arg("seed") = 0, py::arg("threads") = 1,
      "Total mass at the horizon for each replicate, started from a unit atom at the origin.");

  m.def(
      "mixed_moment",
      [](const std::string& preset, const std::vector<py::object>& tests, const std::vector<double>& times) {
        const auto model = model_of(preset);
        std::vector<TestFunction> phis;
        for (const auto& t : tests) phis.push_back(make_test(t, model.dim()));
        const auto r = mixed_moment(model, phis, times, InitialMeasureSpec::point_mass(Vec::Zero(model.dim())));
        return py::make_tuple(r.value, r.error);
      },
      py::arg("preset"), py::arg("tests"), py::arg("times"),
      "Oracle value and error estimate of E prod <phi_i, mu_{t_i}> from a unit atom at the origin.  "
      "None stands for the unit function, a dict {center, width, amplitude} for a Gaussian bump.");

  m.def("term_count", [](int order) { return moment_formula(order).terms.size(); });

  m.def(
      "green",
      [](const std::string& preset, double lambda, const std::vector<double>& x) {
        const auto model = model_of(preset);
        if (int(x.size()) != model.dim()) throw ArgumentError("x has the wrong dimension");
        return GreenFunction(model, lambda)(Eigen::Map<const Vec>(x.data(), model.dim()));
      },
      py::arg("preset"), py::arg("lambda_"), py::arg("x"));

  m.def(
      "mollified_integral",
      [](const std::string& preset, double lambda, double eps) {
        return MollifiedGreen(GreenFunction(model_of(preset), lambda), eps).integral();
      },
      py::arg("preset"), py::arg("lambda_"), py::arg("eps"));

  m.def("classify", [](const std::vector<std::string>& labels) {
    std::vector<Label> ls;
    for (const auto& s : labels) ls.push_back(Label::parse(s));
    const auto c = classify_topology(ls);
    return py::make_tuple(to_string(c.topology), c.generations);
  });
  m.def("arrangement_count", [](const std::string& t) { return arrangement_count(topology_from_string(t)); });

  m.def(
      "run_report",
      [](const std::string& config_text, const std::string& out_dir, int threads) {
        const auto cfg = parse_config(config_text, "<python>");
        StatReport rep;
        {
          py::gil_scoped_release release;
          rep = run_experiment(cfg, {threads, out_dir});
        }
        py::list rows;
        for (const auto& c : rep.checks) {
          py::dict d;
          d["suite"] = c.suite;
          d["name"] = c.name;
          d["estimate"] = c.estimate;
          d["oracle"] = c.oracle;
          d["pass"] = c.pass;
          rows.append(d);
        }
        return py::make_tuple(rep.all_passed(), rep.config_hash, rows);
      },
      py::arg("config_text"), py::arg("out_dir") = "", py::arg("threads") = 1,
      "Parse a JSON configuration, run its suites and return (all_passed, config_hash, checks).");
}
