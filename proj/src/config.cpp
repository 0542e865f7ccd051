#include "flowsilt/config.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/stats.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace flowsilt {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

double get_positive(const json& j, const std::string& path) {
  const double v = get_number(j, path);
  if (!(v > 0.0)) fail(path, "must be positive");
  return v;
}

int get_positive_int(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() <= 0) fail(path, "must be a positive integer");
  if (j.get<long long>() > 2000000000LL) fail(path, "too large");
  return static_cast<int>(j.get<long long>());
}

std::uint64_t get_seed(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
  if (j.is_string()) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(j.get<std::string>(), &used, 0);
      if (used == j.get<std::string>().size()) return v;
    } catch (const std::exception&) {
    }
  }
  fail(path, "must be a non-negative integer (or decimal string)");
}

Vec get_vec(const json& j, const std::string& path, int expected = -1) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Vec v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = get_number(j[i], path + "[" + std::to_string(i) + "]");
  if (expected >= 0 && v.size() != expected) fail(path, "expected " + std::to_string(expected) + " entries");
  return v;
}

Mat get_mat(const json& j, const std::string& path, int rows) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) fail(path, "expected " + std::to_string(rows) + " rows");
  int cols = -1;
  Mat m;
  for (int r = 0; r < rows; ++r) {
    const Vec row = get_vec(j[r], path + "[" + std::to_string(r) + "]");
    if (cols < 0) {
      cols = static_cast<int>(row.size());
      if (cols == 0) fail(path, "rows must be nonempty");
      m.resize(rows, cols);
    } else if (row.size() != cols) {
      fail(path, "rows differ in length");
    }
    m.row(r) = row.transpose();
  }
  return m;
}

std::vector<double> get_list(const json& j, const std::string& path) {
  const Vec v = get_vec(j, path);
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::string position_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

const std::set<std::string>& known_suites() {
  static const std::set<std::string> s{"mass",  "offspring", "martingale", "moments",    "genealogy",
                                       "green", "ito",       "eps",        "singularity"};
  return s;
}

}  // namespace

CoefficientModel model_from_json(const json& j, const std::string& path) {
  check_keys(j, path, {"preset", "dim", "b", "c"});
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) fail(join(path, "preset"), "expected a string");
    if (j.size() != 1) fail(path, "'preset' excludes the other model keys");
    try {
      return CoefficientModel::preset(j["preset"].get<std::string>());
    } catch (const Error& e) {
      fail(join(path, "preset"), e.what());
    }
  }
  for (const char* k : {"dim", "b", "c"})
    if (!j.contains(k)) fail(join(path, k), "missing (or give a preset)");
  const int d = get_positive_int(j["dim"], join(path, "dim"));
  const Vec b = get_vec(j["b"], join(path, "b"), d);
  const Mat c = get_mat(j["c"], join(path, "c"), d);
  try {
    return CoefficientModel::constant(b, c);
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

InitialMeasureSpec mu0_from_json(const json& j, int dim, const std::string& path) {
  check_keys(j, path, {"atoms", "uniform_box"});
  if (j.contains("atoms") == j.contains("uniform_box")) fail(path, "give exactly one of 'atoms' or 'uniform_box'");
  if (j.contains("atoms")) {
    const auto& a = j["atoms"];
    const std::string p = join(path, "atoms");
    if (!a.is_array() || a.empty()) fail(p, "expected a nonempty array");
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string pi = p + "[" + std::to_string(i) + "]";
      check_keys(a[i], pi, {"position", "mass"});
      if (!a[i].contains("position")) fail(pi + ".position", "missing");
      Atom at;
      at.position = get_vec(a[i]["position"], pi + ".position", dim);
      at.mass = a[i].contains("mass") ? get_positive(a[i]["mass"], pi + ".mass") : 1.0;
      atoms.push_back(at);
    }
    return InitialMeasureSpec::atoms(std::move(atoms));
  }
  const auto& b = j["uniform_box"];
  const std::string p = join(path, "uniform_box");
  check_keys(b, p, {"lo", "hi", "mass"});
  for (const char* k : {"lo", "hi"})
    if (!b.contains(k)) fail(join(p, k), "missing");
  const Vec lo = get_vec(b["lo"], join(p, "lo"), dim), hi = get_vec(b["hi"], join(p, "hi"), dim);
  if ((hi - lo).minCoeff() <= 0.0) fail(p, "hi must exceed lo in every coordinate");
  const double mass = b.contains("mass") ? get_positive(b["mass"], join(p, "mass")) : 1.0;
  return InitialMeasureSpec::uniform_box(lo, hi, mass);
}

SimSpec ExperimentConfig::sim_spec() const {
  SimSpec s;
  s.model = model;
  s.mu0 = mu0;
  s.n = sim.n;
  s.substeps = sim.substeps;
  s.horizon = sim.horizon;
  s.seed = sim.seed;
  return s;
}

json ExperimentConfig::to_json() const {
  json j;
  j["model"] = model_json;
  j["mu0"] = mu0_json;
  j["sim"] = {{"n", sim.n},
              {"substeps", sim.substeps},
              {"horizon", sim.horizon},
              {"replicates", sim.replicates},
              {"seed", sim.seed}};
  std::vector<double> u(silt.u.data(), silt.u.data() + silt.u.size());
  j["silt"] = {{"lambda", silt.lambda}, {"u", u}, {"eps", silt.eps}, {"T", silt.T}, {"ball_radii", silt.ball_radii}};
  json suites = json::array();
  for (const auto& s : this->suites) {
    if (s.params.empty()) {
      suites.push_back(s.name);
    } else {
      json o = s.params;
      o["name"] = s.name;
      suites.push_back(o);
    }
  }
  j["suites"] = suites;
  j["thresholds"] = {{"mean", mean_threshold}, {"moment", moment_threshold}};
  j["output"] = output;
  return j;
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": JSON parse error at " + position_of(text, e.byte > 0 ? e.byte - 1 : 0) + ": " +
                      e.what());
  }
  if (!j.is_object()) throw ConfigError(source + ": top level must be a JSON object");
  try {
    check_keys(j, "", {"model", "mu0", "sim", "silt", "suites", "thresholds", "output"});
    ExperimentConfig c;
    if (j.contains("model")) c.model_json = j["model"];
    c.model = model_from_json(c.model_json);
    const int d = c.model.dim();
    if (j.contains("mu0")) {
      c.mu0_json = j["mu0"];
    } else {
      c.mu0_json = {{"atoms", {{{"position", std::vector<double>(static_cast<std::size_t>(d), 0.0)}, {"mass", 1.0}}}}};
    }
    c.mu0 = mu0_from_json(c.mu0_json, d);

    bool have_seed = false;
    if (j.contains("sim")) {
      const auto& s = j["sim"];
      check_keys(s, "sim", {"n", "substeps", "horizon", "replicates", "seed"});
      if (s.contains("n")) c.sim.n = get_positive_int(s["n"], "sim.n");
      if (s.contains("substeps")) c.sim.substeps = get_positive_int(s["substeps"], "sim.substeps");
      if (s.contains("horizon")) c.sim.horizon = get_positive(s["horizon"], "sim.horizon");
      if (s.contains("replicates")) c.sim.replicates = get_positive_int(s["replicates"], "sim.replicates");
      if (s.contains("seed")) {
        c.sim.seed = get_seed(s["seed"], "sim.seed");
        have_seed = true;
      }
    }
    if (seed_override) {
      c.sim.seed = *seed_override;
      have_seed = true;
    }
    if (!have_seed) fail("sim.seed", "missing; a seed is required for reproducibility (or pass --seed)");

    c.silt.u = Vec::Zero(d);
    if (j.contains("silt")) {
      const auto& s = j["silt"];
      check_keys(s, "silt", {"lambda", "u", "eps", "T", "ball_radii"});
      if (s.contains("lambda")) c.silt.lambda = get_positive(s["lambda"], "silt.lambda");
      if (s.contains("u")) c.silt.u = get_vec(s["u"], "silt.u", d);
      if (s.contains("eps")) c.silt.eps = get_list(s["eps"], "silt.eps");
      if (s.contains("T")) c.silt.T = get_positive(s["T"], "silt.T");
      if (s.contains("ball_radii")) c.silt.ball_radii = get_list(s["ball_radii"], "silt.ball_radii");
    }
    if (c.silt.eps.size() < 3) fail("silt.eps", "needs at least 3 values");
    for (std::size_t i = 0; i < c.silt.eps.size(); ++i) {
      if (!(c.silt.eps[i] > 0.0)) fail("silt.eps", "values must be positive");
      if (i > 0 && !(c.silt.eps[i] < c.silt.eps[i - 1])) fail("silt.eps", "schedule must be strictly decreasing");
    }
    for (double r : c.silt.ball_radii)
      if (!(r > 0.0)) fail("silt.ball_radii", "values must be positive");

    if (j.contains("suites")) {
      const auto& s = j["suites"];
      if (!s.is_array()) fail("suites", "expected an array");
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::string p = "suites[" + std::to_string(i) + "]";
        SuiteSpec spec;
        if (s[i].is_string()) {
          spec.name = s[i].get<std::string>();
        } else if (s[i].is_object() && s[i].contains("name") && s[i]["name"].is_string()) {
          spec.name = s[i]["name"].get<std::string>();
          spec.params = s[i];
          spec.params.erase("name");
        } else {
          fail(p, "expected a suite name or an object with a 'name'");
        }
        if (!known_suites().count(spec.name)) fail(p, "unknown suite '" + spec.name + "'");
        c.suites.push_back(std::move(spec));
      }
    }
    if (j.contains("thresholds")) {
      const auto& t = j["thresholds"];
      check_keys(t, "thresholds", {"mean", "moment"});
      if (t.contains("mean")) c.mean_threshold = get_positive(t["mean"], "thresholds.mean");
      if (t.contains("moment")) c.moment_threshold = get_positive(t["moment"], "thresholds.moment");
    }
    if (j.contains("output")) {
      if (!j["output"].is_string()) fail("output", "expected a string");
      c.output = j["output"].get<std::string>();
    }
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path, seed_override);
}

}  // namespace flowsilt
