#include "cfident/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace cfident {

double InputProfile::at(double t) const {
  if (const auto* c = as_constant()) return c->u0;
  if (const auto* p = as_polynomial()) {
    double acc = 0.0;
    for (std::size_t i = p->coeffs.size(); i-- > 0;) acc = acc * t + p->coeffs[i];
    return acc;
  }
  const auto* pl = as_piecewise();
  const auto& ts = pl->t;
  const auto& us = pl->u;
  if (t <= ts.front()) return us.front();
  if (t >= ts.back()) return us.back();
  auto it = std::upper_bound(ts.begin(), ts.end(), t);
  std::size_t hi = static_cast<std::size_t>(it - ts.begin());
  std::size_t lo = hi - 1;
  double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
  return us[lo] + w * (us[hi] - us[lo]);
}

void InputProfile::validate(double horizon, double dt) const {
  if (const auto* pl = as_piecewise()) {
    if (pl->t.size() < 2 || pl->t.size() != pl->u.size())
      throw ConfigError("piecewise-linear profile needs matching t/u lists with >= 2 samples");
    for (std::size_t i = 1; i < pl->t.size(); ++i)
      if (!(pl->t[i] > pl->t[i - 1]))
        throw ConfigError("piecewise-linear profile times must be strictly increasing");
    if (pl->t.front() > 0.0 || pl->t.back() < horizon)
      throw ConfigError("piecewise-linear profile must cover [0, " + format_double(horizon) + "] s");
  }
  int k_max = static_cast<int>(std::llround(horizon / dt));
  for (int k = 0; k <= k_max; ++k) {
    double u = at(k * dt);
    if (!(u >= 0.0) || !std::isfinite(u))
      throw ConfigError("lead velocity must be finite and non-negative; u(" +
                        format_double(k * dt) + ") = " + format_double(u));
  }
}

InputProfile InputProfile::shipped() {
  PiecewiseLinearInput p;
  p.t = {0.0, 10.0, 25.0, 40.0, 60.0, 80.0};
  p.u = {32.5, 28.0, 35.0, 27.0, 34.0, 30.0};
  return InputProfile(std::move(p));
}

InputProfile InputProfile::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input profile CSV '" + path + "'");
  PiecewiseLinearInput p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double t, u;
    if (!(row >> t >> u)) {
      if (lineno == 1) continue;  // header row
      throw ConfigError("malformed row " + std::to_string(lineno) + " in '" + path + "'");
    }
    p.t.push_back(t);
    p.u.push_back(u);
  }
  if (p.t.size() < 2) throw ConfigError("input profile CSV '" + path + "' needs >= 2 samples");
  return InputProfile(std::move(p));
}

int Scenario::steps() const {
  if (!(dt > 0.0)) throw ConfigError("scenario: dt must be positive");
  double ratio = horizon / dt;
  int k = static_cast<int>(std::llround(ratio));
  if (k < 1 || std::abs(ratio - k) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError("scenario: horizon must be a positive integer multiple of dt");
  return k;
}

void Scenario::validate() const {
  int k = steps();
  (void)k;
  input.validate(horizon, dt);
  if (!std::isfinite(x0.gap) || !std::isfinite(x0.speed))
    throw ConfigError("scenario: initial state must be finite");
}

Simulator::Simulator(const ModelSpec& m, const Scenario& sc) : model_(&m), scenario_(sc) {
  sc.validate();
  steps_ = sc.steps();
  u_.resize(static_cast<std::size_t>(steps_) + 1);
  for (int k = 0; k <= steps_; ++k) u_[static_cast<std::size_t>(k)] = sc.input.at(k * sc.dt);
  both_outputs_ = sc.output == OutputMode::GapAndSpeed;
}

bool Simulator::run(std::span<const double> theta, std::span<double> gap_out,
                    std::span<double> speed_out, int* fail_step) const {
  const Tape& tape = model_->dynamics_tape();
  std::vector<double> in(static_cast<std::size_t>(tape.input_count()));
  std::vector<double> scratch(static_cast<std::size_t>(tape.slot_count()));
  std::copy(theta.begin(), theta.end(), in.begin() + 3);

  const double dt = scenario_.dt;
  double s = scenario_.x0.gap;
  double v = scenario_.x0.speed;
  double accel = 0.0;
  for (int k = 0; k <= steps_; ++k) {
    if (!gap_out.empty()) gap_out[static_cast<std::size_t>(k)] = s;
    if (!speed_out.empty()) speed_out[static_cast<std::size_t>(k)] = v;
    if (k == steps_) break;
    in[0] = s;
    in[1] = v;
    in[2] = u_[static_cast<std::size_t>(k)];
    if (!tape.eval(in, scratch, std::span<double>(&accel, 1)) || !std::isfinite(s) ||
        !std::isfinite(v)) {
      if (fail_step) *fail_step = k;
      return false;
    }
    s += dt * (u_[static_cast<std::size_t>(k)] - v);
    v += dt * accel;
  }
  if (!std::isfinite(s) || !std::isfinite(v)) {
    if (fail_step) *fail_step = steps_;
    return false;
  }
  return true;
}

double Simulator::paired_error(std::span<const double> theta1, std::span<const double> theta2,
                               double cap, bool& ok) const {
  const Tape& tape = model_->dynamics_tape();
  std::vector<double> in1(static_cast<std::size_t>(tape.input_count()));
  std::vector<double> in2(static_cast<std::size_t>(tape.input_count()));
  std::vector<double> scratch(static_cast<std::size_t>(tape.slot_count()));
  std::copy(theta1.begin(), theta1.end(), in1.begin() + 3);
  std::copy(theta2.begin(), theta2.end(), in2.begin() + 3);

  const double dt = scenario_.dt;
  const double n_samples = static_cast<double>(steps_) + 1.0;
  const double sum_cap = cap * n_samples;
  double s1 = scenario_.x0.gap, v1 = scenario_.x0.speed;
  double s2 = s1, v2 = v1;
  double sum = 0.0;
  double a1 = 0.0, a2 = 0.0;
  ok = true;

  for (int k = 0; k <= steps_; ++k) {
    double ds = s1 - s2;
    sum += ds * ds;
    if (both_outputs_) {
      double dv = v1 - v2;
      sum += dv * dv;
    }
    if (!(sum <= sum_cap)) return sum / n_samples;  // already infeasible
    if (k == steps_) break;
    double u = u_[static_cast<std::size_t>(k)];
    in1[0] = s1;
    in1[1] = v1;
    in1[2] = u;
    in2[0] = s2;
    in2[1] = v2;
    in2[2] = u;
    bool fine = tape.eval(in1, scratch, std::span<double>(&a1, 1));
    fine &= tape.eval(in2, scratch, std::span<double>(&a2, 1));
    if (!fine || !std::isfinite(s1) || !std::isfinite(v1) || !std::isfinite(s2) ||
        !std::isfinite(v2)) {
      ok = false;
      return std::numeric_limits<double>::infinity();
    }
    s1 += dt * (u - v1);
    v1 += dt * a1;
    s2 += dt * (u - v2);
    v2 += dt * a2;
  }
  if (!std::isfinite(sum)) {
    ok = false;
    return std::numeric_limits<double>::infinity();
  }
  return sum / n_samples;
}

Trajectory simulate(const ModelSpec& m, const Scenario& sc, std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != m.param_count())
    throw Error("simulate: theta size mismatch for model '" + m.name() + "'");
  Simulator sim(m, sc);
  Trajectory traj;
  int n = sim.steps() + 1;
  traj.t.resize(static_cast<std::size_t>(n));
  traj.gap.resize(static_cast<std::size_t>(n));
  traj.speed.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) traj.t[static_cast<std::size_t>(k)] = k * sc.dt;
  int fail_step = -1;
  if (!sim.run(theta, traj.gap, traj.speed, &fail_step))
    throw DomainError("simulation of '" + m.name() + "' failed at step " +
                      std::to_string(fail_step) + " (t = " + format_double(fail_step * sc.dt) +
                      " s): domain violation or non-finite state");
  return traj;
}

double output_error(const ModelSpec& m, const Scenario& sc, std::span<const double> theta1,
                    std::span<const double> theta2) {
  Simulator sim(m, sc);
  bool ok = true;
  double e = sim.paired_error(theta1, theta2, std::numeric_limits<double>::infinity(), ok);
  if (!ok)
    throw DomainError("output_error: simulation of '" + m.name() + "' failed");
  return e;
}

ErrorGrid error_grid(const ModelSpec& m, const Scenario& sc, std::span<const double> theta_true,
                     int x_param, int y_param, std::pair<double, double> x_range,
                     std::pair<double, double> y_range, int x_count, int y_count) {
  if (x_param == y_param) throw ConfigError("error_grid: the two axis parameters must differ");
  if (x_param < 0 || x_param >= m.param_count() || y_param < 0 || y_param >= m.param_count())
    throw ConfigError("error_grid: axis parameter index out of range");
  if (x_count < 1 || y_count < 1) throw ConfigError("error_grid: resolution must be >= 1");
  if (static_cast<int>(theta_true.size()) != m.param_count())
    throw Error("error_grid: theta_true size mismatch");

  Simulator sim(m, sc);
  ErrorGrid grid;
  grid.x_param = m.params()[static_cast<std::size_t>(x_param)].name;
  grid.y_param = m.params()[static_cast<std::size_t>(y_param)].name;
  auto axis = [](std::pair<double, double> range, int count) {
    std::vector<double> vals(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      vals[static_cast<std::size_t>(i)] =
          count == 1 ? range.first
                     : range.first + (range.second - range.first) * i / (count - 1);
    return vals;
  };
  grid.x_values = axis(x_range, x_count);
  grid.y_values = axis(y_range, y_count);

  std::vector<double> theta(theta_true.begin(), theta_true.end());
  grid.e.assign(static_cast<std::size_t>(x_count),
                std::vector<double>(static_cast<std::size_t>(y_count), 0.0));
  for (int i = 0; i < x_count; ++i) {
    for (int j = 0; j < y_count; ++j) {
      theta[static_cast<std::size_t>(x_param)] = grid.x_values[static_cast<std::size_t>(i)];
      theta[static_cast<std::size_t>(y_param)] = grid.y_values[static_cast<std::size_t>(j)];
      bool ok = true;
      double e =
          sim.paired_error(theta, theta_true, std::numeric_limits<double>::infinity(), ok);
      grid.e[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          ok ? e : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return grid;
}

}  // namespace cfident
