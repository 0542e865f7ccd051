#pragma once

#include "flowsilt/model.hpp"
#include "flowsilt/particles.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flowsilt {

struct SuiteSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();  // overrides of the sim / silt blocks
};

struct SimConfig {
  int n = 100;
  int substeps = 4;
  double horizon = 1.0;
  int replicates = 1000;
  std::uint64_t seed = 0;
};

struct SiltConfig {
  double lambda = 1.0;
  Vec u;
  std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
  double T = 1.0;
  std::vector<double> ball_radii{0.2, 0.1};
};

struct ExperimentConfig {
  nlohmann::json model_json = {{"preset", "bm1d"}};
  nlohmann::json mu0_json = {{"atoms", {{{"position", {0.0}}, {"mass", 1.0}}}}};
  CoefficientModel model = CoefficientModel::preset("bm1d");
  InitialMeasureSpec mu0 = InitialMeasureSpec::point_mass(Vec::Zero(1));
  SimConfig sim;
  SiltConfig silt;
  std::vector<SuiteSpec> suites;
  double mean_threshold = 3.0;    // z bound for means
  double moment_threshold = 5.0;  // z bound for higher moments
  std::string output = "flowsilt-out";

  SimSpec sim_spec() const;
  nlohmann::json to_json() const;
  // FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

// Throws ConfigError with the source position or key path of the problem.
// A seed must be present in the file unless `seed_override` is given.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt);

CoefficientModel model_from_json(const nlohmann::json& j, const std::string& path = "model");
InitialMeasureSpec mu0_from_json(const nlohmann::json& j, int dim, const std::string& path = "mu0");

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace flowsilt
