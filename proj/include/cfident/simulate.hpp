#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cfident/structural.hpp"

namespace cfident {

struct ConstantInput {
  double u0 = 0.0;
};

// u(t) = c0 + c1 t + c2 t^2 + ...
struct PolynomialInput {
  std::vector<double> coeffs;
};

// Strictly increasing knots; must cover the scenario horizon.
struct PiecewiseLinearInput {
  std::vector<double> t;
  std::vector<double> u;
};

class InputProfile {
 public:
  InputProfile() : data_(ConstantInput{0.0}) {}
  InputProfile(ConstantInput c) : data_(c) {}
  InputProfile(PolynomialInput p) : data_(std::move(p)) {}
  InputProfile(PiecewiseLinearInput p) : data_(std::move(p)) {}

  double at(double t) const;

  // Checks u(t) >= 0 on the step grid and, for piecewise-linear profiles,
  // knot ordering and coverage of [0, horizon].
  void validate(double horizon, double dt) const;

  // The repository's stand-in for the paper-style time-varying lead profile:
  // piecewise linear over 80 s, starting at 32.5 m/s, oscillating within
  // [27, 35] m/s with four speed reversals.
  static InputProfile shipped();

  static InputProfile from_csv(const std::string& path);

  const ConstantInput* as_constant() const { return std::get_if<ConstantInput>(&data_); }
  const PolynomialInput* as_polynomial() const { return std::get_if<PolynomialInput>(&data_); }
  const PiecewiseLinearInput* as_piecewise() const {
    return std::get_if<PiecewiseLinearInput>(&data_);
  }

 private:
  std::variant<ConstantInput, PolynomialInput, PiecewiseLinearInput> data_;
};

struct Scenario {
  State x0;
  InputProfile input;
  double horizon = 80.0;
  double dt = 0.1;
  OutputMode output = OutputMode::GapOnly;

  // Number of Euler steps K; horizon must be an integer multiple of dt.
  int steps() const;
  void validate() const;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<double> gap;
  std::vector<double> speed;
  std::size_t size() const { return t.size(); }
};

// Explicit forward Euler:
//   s_{k+1} = s_k + dt (u(t_k) - v_k)
//   v_{k+1} = v_k + dt f_CF(s_k, v_k, u(t_k), theta)
// Throws DomainError (with the step index) when the dynamics leave their
// domain or the state stops being finite.
Trajectory simulate(const ModelSpec& m, const Scenario& sc, std::span<const double> theta);

// Mean squared output difference over the K+1 samples; m^2 for gap output.
// The sum is divided by the number of samples (K+1).
double output_error(const ModelSpec& m, const Scenario& sc, std::span<const double> theta1,
                    std::span<const double> theta2);

// Reusable fast path: compiled dynamics and presampled input for one
// (model, scenario) pair. Thread-safe after construction.
class Simulator {
 public:
  Simulator(const ModelSpec& m, const Scenario& sc);

  int steps() const { return steps_; }
  const std::vector<double>& input_samples() const { return u_; }

  // Returns false on domain violation / blow-up; fail_step then holds the
  // step index. Output spans may be empty when the trajectory is not needed.
  bool run(std::span<const double> theta, std::span<double> gap_out, std::span<double> speed_out,
           int* fail_step = nullptr) const;

  // Mean squared output difference between two parameterizations, fused into
  // one pass. Stops early (returning a value > cap) as soon as the running
  // sum certifies the result exceeds cap; pass +inf for the exact error.
  // Sets ok=false on simulation failure under either parameterization.
  double paired_error(std::span<const double> theta1, std::span<const double> theta2, double cap,
                      bool& ok) const;

 private:
  const ModelSpec* model_;
  Scenario scenario_;
  std::vector<double> u_;
  int steps_ = 0;
  bool both_outputs_ = false;
};

struct ErrorGrid {
  std::string x_param, y_param;
  std::vector<double> x_values, y_values;
  // e[i][j] = error at (x_values[i], y_values[j]); NaN marks a cell whose
  // simulation hit a domain violation
  std::vector<std::vector<double>> e;
};

// e(theta, theta_true) over a 2-D parameter slice, remaining parameters
// pinned at theta_true.
ErrorGrid error_grid(const ModelSpec& m, const Scenario& sc, std::span<const double> theta_true,
                     int x_param, int y_param, std::pair<double, double> x_range,
                     std::pair<double, double> y_range, int x_count, int y_count);

}  // namespace cfident
