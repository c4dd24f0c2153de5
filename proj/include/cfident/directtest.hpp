#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cfident/simulate.hpp"

namespace cfident {

struct OptimizerSettings {
  int starts = 16;
  int max_evals_per_start = 20000;
  double initial_mesh = 0.25;  // fraction of each box width
  double mesh_tol = 1e-6;      // stop once the mesh falls below this fraction
  int sweep_fresh_starts = 4;  // fresh random starts per sweep point after the first
  std::uint64_t seed = 1;
  int jobs = 0;  // worker cap for concurrent starts; 0 = hardware
};

// maximize d(theta1, theta2) subject to e(theta1, theta2) <= eps, both
// vectors inside the model's parameter box.
struct DirectTestProblem {
  ModelSpec model;
  Scenario scenario;
  double eps = 1e-6;  // output-error cap (m^2 for gap output)
  OptimizerSettings opt;
};

struct DirectTestResult {
  std::vector<double> theta1, theta2;
  double delta = 0.0;  // normalized distance, recomputed from the vectors
  double error = 0.0;  // re-simulated output error of the reported pair
  long evaluations = 0;
  int best_start = -1;
  bool feasible = false;
};

struct SweepPoint {
  double eps = 0.0;
  double delta = 0.0;
  std::vector<double> theta1, theta2;
  bool solved = false;  // false when every start failed at this point
};

using SensitivityCurve = std::vector<SweepPoint>;

// Normalized Euclidean distance in [0,1]:
//   d = sqrt( (1/n) * sum_i ((t1_i - t2_i) / (ub_i - lb_i))^2 )
double distance(std::span<const double> theta1, std::span<const double> theta2,
                std::span<const ParamSpec> bounds);

// Multistart pattern search with the error cap as a hard barrier: every
// iterate, and hence the reported pair, satisfies e <= eps. Each start
// begins at theta1 = theta2 = random point (error exactly 0). The poll set
// combines single-coordinate moves of either vector (accepted on strict
// distance increase) with paired moves of both vectors along one parameter
// (distance-neutral, accepted on strict error decrease); the paired moves
// let the pair travel along output-equivalent parameter sets. Deterministic
// for a fixed seed. delta is a lower bound on the true maximum.
DirectTestResult solve(const DirectTestProblem& p);

// Per-eps solves over an increasing grid, warm-starting each point from the
// previous optimum plus fresh random starts, and carrying the best feasible
// incumbent forward (feasible at eps stays feasible at larger eps), so the
// reported curve is non-decreasing.
SensitivityCurve sweep(const DirectTestProblem& p, std::span<const double> eps_grid);

}  // namespace cfident
