#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "cfident/runner.hpp"

namespace {

using cfident::ConfigError;
using cfident::RunConfig;

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    std::string part = text.substr(start, comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("malformed number '" + part + "' in list '" + text + "'");
    }
    start = comma + 1;
  }
  return out;
}

std::pair<double, double> parse_range(const std::string& text) {
  std::size_t colon = text.find(':');
  if (colon == std::string::npos)
    throw ConfigError("range '" + text + "' must look like lo:hi");
  auto lo = parse_list(text.substr(0, colon));
  auto hi = parse_list(text.substr(colon + 1));
  if (lo.size() != 1 || hi.size() != 1) throw ConfigError("range '" + text + "' must be lo:hi");
  return {lo[0], hi[0]};
}

// Shared flag set; each field is optional so only explicitly set flags
// override the config file.
struct Flags {
  std::string config_path;
  std::string model;
  std::string x0;
  double u0 = 0;
  bool u0_set = false;
  double eq_gap = 0;
  bool eq_gap_set = false;
  std::string input;
  double horizon = 0;
  bool horizon_set = false;
  double dt = 0;
  bool dt_set = false;
  std::string output;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = -1;
  std::string out_dir;

  std::string mode;
  int degree = -1;
  int trials = -1;
  double tol = 0;
  bool tol_set = false;
  bool table1 = false;

  double eps = 0;
  bool eps_set = false;
  int starts = -1;
  int max_evals = -1;
  std::string theta_true;

  std::string eps_grid;
  int points = -1;
  double eps_min = 0;
  bool eps_min_set = false;
  double eps_max = 0;
  bool eps_max_set = false;

  std::string axes;
  std::string x_range, y_range;
  std::string res;
};

void add_common_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file; flags override its values");
  cmd->add_option("--model", f.model, "builtin model: cthrv, ov, ftl, idm");
  cmd->add_option("--x0", f.x0, "initial state 'gap,speed' or 'equilibrium'");
  cmd->add_option("--u0", f.u0, "lead speed for the equilibrium IC")->each([&f](const std::string&) {
    f.u0_set = true;
  });
  cmd->add_option("--eq-gap", f.eq_gap, "equilibrium gap for models that leave it free (ftl)")
      ->each([&f](const std::string&) { f.eq_gap_set = true; });
  cmd->add_option("--input", f.input,
                  "lead profile: shipped | constant:V | poly:c0,c1,.. | pl:t:u,.. | csv:PATH");
  cmd->add_option("--horizon", f.horizon, "simulation horizon T (s)")->each([&f](const std::string&) {
    f.horizon_set = true;
  });
  cmd->add_option("--dt", f.dt, "Euler step (s)")->each([&f](const std::string&) { f.dt_set = true; });
  cmd->add_option("--output", f.output, "measured output: gap | gap-speed");
  cmd->add_option("--seed", f.seed, "RNG seed")->each([&f](const std::string&) { f.seed_set = true; });
  cmd->add_option("--jobs", f.jobs, "max worker threads (0 = hardware)");
  cmd->add_option("--out", f.out_dir, "output directory (default $CFIDENT_OUT or ./out)");
  cmd->add_option("--theta-true", f.theta_true,
                  "reference parameter vector (grids, equilibrium IC resolution)");
}

RunConfig build_config(const Flags& f) {
  RunConfig c;
  if (const char* env = std::getenv("CFIDENT_OUT")) c.out_dir = env;
  if (!f.config_path.empty()) c = cfident::load_config_file(f.config_path);

  if (!f.model.empty()) {
    c.model = f.model;
    c.custom_model.reset();
  }
  if (!f.x0.empty()) {
    if (f.x0 == "equilibrium") {
      c.scenario.equilibrium = true;
      c.scenario.x0.reset();
    } else {
      auto v = parse_list(f.x0);
      if (v.size() != 2) throw ConfigError("--x0 needs 'gap,speed' or 'equilibrium'");
      c.scenario.x0 = cfident::State{v[0], v[1]};
      c.scenario.equilibrium = false;
    }
  }
  if (f.u0_set) c.scenario.u0 = f.u0;
  if (f.eq_gap_set) c.scenario.eq_gap = f.eq_gap;
  if (!f.input.empty()) c.scenario.input = f.input;
  if (f.horizon_set) c.scenario.horizon = f.horizon;
  if (f.dt_set) c.scenario.dt = f.dt;
  if (!f.output.empty()) {
    if (f.output == "gap")
      c.scenario.output = cfident::OutputMode::GapOnly;
    else if (f.output == "gap-speed")
      c.scenario.output = cfident::OutputMode::GapAndSpeed;
    else
      throw ConfigError("--output must be gap or gap-speed");
  }
  if (f.seed_set) c.seed = f.seed;
  if (f.jobs >= 0) c.jobs = f.jobs;
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;

  if (!f.mode.empty()) c.mode = f.mode;
  if (f.degree >= 0) c.degree = f.degree;
  if (f.trials >= 0) c.trials = f.trials;
  if (f.tol_set) c.tol = f.tol;

  if (f.eps_set) c.eps = f.eps;
  if (f.starts >= 0) c.opt.starts = f.starts;
  if (f.max_evals >= 0) c.opt.max_evals_per_start = f.max_evals;
  if (!f.theta_true.empty()) c.theta_true = parse_list(f.theta_true);

  if (!f.eps_grid.empty()) {
    c.eps_grid = parse_list(f.eps_grid);
  } else if (f.points >= 1 || f.eps_min_set || f.eps_max_set) {
    double lo = f.eps_min_set ? f.eps_min : 1e-6;
    double hi = f.eps_max_set ? f.eps_max : 1.0;
    int n = f.points >= 1 ? f.points : 13;
    c.eps_grid.clear();
    for (int i = 0; i < n; ++i)
      c.eps_grid.push_back(
          n == 1 ? lo : std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (n - 1)));
  }

  if (!f.axes.empty()) {
    std::size_t comma = f.axes.find(',');
    if (comma == std::string::npos) throw ConfigError("--axes needs 'param1,param2'");
    c.x_param = f.axes.substr(0, comma);
    c.y_param = f.axes.substr(comma + 1);
  }
  if (!f.x_range.empty()) c.x_range = parse_range(f.x_range);
  if (!f.y_range.empty()) c.y_range = parse_range(f.y_range);
  if (!f.res.empty()) {
    std::size_t x = f.res.find('x');
    if (x == std::string::npos) throw ConfigError("--res needs 'NxM'");
    c.x_count = std::stoi(f.res.substr(0, x));
    c.y_count = std::stoi(f.res.substr(x + 1));
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "cfident: structural and practical parameter identifiability of car-following models"};
  app.require_subcommand(1);

  Flags f;

  CLI::App* structural = app.add_subcommand(
      "structural", "rank of the observability-identifiability matrix at random points");
  add_common_flags(structural, f);
  structural->add_option("--mode", f.mode, "initial-condition mode: generic | equilibrium | fixed");
  structural->add_option("--degree", f.degree, "polynomial input degree n (u^(j)=0 for j>n)");
  structural->add_option("--trials", f.trials, "random evaluation points");
  structural->add_option("--tol", f.tol, "relative singular-value tolerance")
      ->each([&f](const std::string&) { f.tol_set = true; });
  structural->add_flag("--table1", f.table1, "run all models x {generic, equilibrium} instead");

  CLI::App* direct = app.add_subcommand("direct", "numerical direct test at one error cap");
  add_common_flags(direct, f);
  direct->add_option("--eps", f.eps, "output-error cap (m^2)")->each([&f](const std::string&) {
    f.eps_set = true;
  });
  direct->add_option("--starts", f.starts, "multistart count");
  direct->add_option("--max-evals", f.max_evals, "evaluation budget per start");

  CLI::App* sweepc = app.add_subcommand("sweep", "direct test across an error-cap grid");
  add_common_flags(sweepc, f);
  sweepc->add_option("--eps-grid", f.eps_grid, "explicit increasing eps list 'a,b,c'");
  sweepc->add_option("--points", f.points, "log-spaced point count (default 13)");
  sweepc->add_option("--eps-min", f.eps_min, "grid start (default 1e-6)")
      ->each([&f](const std::string&) { f.eps_min_set = true; });
  sweepc->add_option("--eps-max", f.eps_max, "grid end (default 1)")
      ->each([&f](const std::string&) { f.eps_max_set = true; });
  sweepc->add_option("--starts", f.starts, "multistart count for the first grid point");
  sweepc->add_option("--max-evals", f.max_evals, "evaluation budget per start");

  CLI::App* grid = app.add_subcommand("grid", "error surface e(theta, theta_true) over a 2-D slice");
  add_common_flags(grid, f);
  grid->add_option("--axes", f.axes, "two parameter names, e.g. k1,k2");
  grid->add_option("--x-range", f.x_range, "first axis range lo:hi (default: bounds)");
  grid->add_option("--y-range", f.y_range, "second axis range lo:hi (default: bounds)");
  grid->add_option("--res", f.res, "resolution NxM (default 41x41)");

  CLI::App* table1 = app.add_subcommand("table1", "reproduce the structural summary table");
  add_common_flags(table1, f);
  table1->add_option("--trials", f.trials, "random evaluation points");

  CLI::App* table3 = app.add_subcommand("table3", "reproduce the CTH-RV direct-test table");
  add_common_flags(table3, f);
  table3->add_option("--starts", f.starts, "multistart count");
  table3->add_option("--max-evals", f.max_evals, "evaluation budget per start");

  CLI11_PARSE(app, argc, argv);

  return cfident::guarded([&]() -> int {
    RunConfig config = build_config(f);
    if (structural->parsed()) return f.table1 ? cfident::run_table1(config) : cfident::run_structural(config);
    if (direct->parsed()) return cfident::run_direct(config);
    if (sweepc->parsed()) return cfident::run_sweep(config);
    if (grid->parsed()) return cfident::run_grid(config);
    if (table1->parsed()) return cfident::run_table1(config);
    if (table3->parsed()) return cfident::run_table3(config);
    throw ConfigError("no subcommand selected");
  });
}
