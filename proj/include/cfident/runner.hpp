#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfident/directtest.hpp"

namespace cfident {

// Distinct process exit codes, also returned by the run_* entry points.
enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kConfigErrorCode = 2,
  kDomainErrorCode = 3,
  kInfeasibleCode = 4,
};

struct CustomModelConfig {
  std::string name;
  std::vector<ParamSpec> params;
  std::string f_cf;
  std::optional<std::string> equilibrium_gap;
};

struct ScenarioConfig {
  std::optional<State> x0;       // explicit initial state...
  bool equilibrium = false;      // ...or the model equilibrium at u0
  std::optional<double> u0;      // lead speed for the equilibrium IC (default: input at t=0)
  std::optional<double> eq_gap;  // equilibrium gap for models that leave it free (FTL)
  std::string input = "shipped";  // shipped | constant:V | poly:c0,c1,... | pl:t:u,t:u,... | csv:PATH
  double horizon = 80.0;
  double dt = 0.1;
  OutputMode output = OutputMode::GapOnly;
};

struct RunConfig {
  std::string model = "cthrv";
  std::optional<CustomModelConfig> custom_model;
  ScenarioConfig scenario;

  // structural
  std::string mode = "generic";  // generic | equilibrium
  int degree = 0;
  int trials = 20;
  double tol = 1e-9;
  int max_degree = 3;

  // direct test / sweep
  double eps = 1e-6;
  OptimizerSettings opt;
  std::vector<double> eps_grid;  // empty -> 13 points log-spaced over [1e-6, 1]

  // error grid
  std::string x_param, y_param;
  std::optional<std::pair<double, double>> x_range, y_range;
  int x_count = 41, y_count = 41;
  std::vector<double> theta_true;

  std::uint64_t seed = 1;
  int jobs = 0;
  std::string out_dir = "out";
};

// JSON config file / text; unknown keys are rejected. CLI flags are merged on
// top by the frontend.
RunConfig load_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& json_text);
void merge_config_text(RunConfig& config, const std::string& json_text);

// One-line JSON image of the resolved config; embedded in every output file
// so any artifact can be reproduced byte-for-byte.
std::string config_json(const RunConfig& config, const std::string& command);

ModelSpec resolve_model(const RunConfig& config);
InputProfile resolve_input(const std::string& spec);
Scenario resolve_scenario(const RunConfig& config, const ModelSpec& model);
std::vector<double> resolve_eps_grid(const RunConfig& config);

// Subcommand bodies; they write their artifacts under config.out_dir and
// return an ExitCode. The CLI maps uncaught exceptions to the same codes.
int run_structural(const RunConfig& config);
int run_table1(const RunConfig& config);
int run_direct(const RunConfig& config);
int run_table3(const RunConfig& config);
int run_sweep(const RunConfig& config);
int run_grid(const RunConfig& config);

// Shared exception-to-exit-code mapping.
int guarded(const std::function<int()>& body);

}  // namespace cfident
