#pragma once

// Experiment configuration: a single JSON file with nested sections. Parsing
// collects every schema violation (unknown keys, duplicate keys, type and
// range errors) instead of stopping at the first.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "convexctrl/model.hpp"
#include "convexctrl/verify.hpp"

namespace convexctrl {

struct DictionaryAtomSpec {
  std::string type;             // "constant" | "goal_seeking" | "zero"
  Eigen::VectorXd value;        // constant
  double gain = 1.0;            // goal_seeking
  Eigen::VectorXd goal;         // goal_seeking; empty -> model goal
};

struct ExperimentConfig {
  std::string family = "leader_follower";
  LeaderFollowerParams leader_follower;
  ReplicatorParams replicator;

  TimeGrid grid{0.0, 1.0, 200};

  int n_particles = 16;
  std::uint64_t ensemble_seed = 7;
  double position_box = 1.0;
  std::string placement = "random";  // "random" | "halton"
  std::vector<StateC> explicit_particles;

  double u_max = 1.0;
  bool per_agent = false;
  std::vector<DictionaryAtomSpec> dictionary;
  int init_atom = 0;
  std::string schedule_file;

  double damping = 0.5;
  int max_iters = 50;
  double solver_tol = 1e-3;

  int verify_trials = 100;
  std::uint64_t verify_seed = 1234;
  std::vector<double> dt_list{1e-3, 5e-4, 2.5e-4, 1.25e-4};
  std::vector<int> n_list{8, 16, 32, 64};

  std::string output_directory = "out";
  std::vector<std::string> formats{"csv", "json"};

  std::unique_ptr<Model> make_model() const;
  Ensemble make_ensemble(const Model& model, std::optional<std::uint64_t> seed_override) const;
  ControlDictionary make_dictionary(const Model& model) const;
};

struct ParseResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> errors;

  bool ok() const { return errors.empty() && config.has_value(); }
};

ParseResult parse_config(const std::string& path);
ParseResult parse_config_text(const std::string& text, const std::string& origin = "<memory>");

}  // namespace convexctrl
