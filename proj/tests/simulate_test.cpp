#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cfident/simulate.hpp"
#include "support/oracles.hpp"

using namespace cfident;

namespace {

Scenario shipped_scenario(State x0, OutputMode output = OutputMode::GapOnly) {
  Scenario sc;
  sc.x0 = x0;
  sc.input = InputProfile::shipped();
  sc.horizon = 80.0;
  sc.dt = 0.1;
  sc.output = output;
  return sc;
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("input profiles: evaluation and validation") {
  InputProfile constant{ConstantInput{31.0}};
  CHECK(constant.at(12.3) == 31.0);

  InputProfile poly{PolynomialInput{{1.0, 2.0, 0.5}}};
  CHECK(poly.at(2.0) == doctest::Approx(1.0 + 4.0 + 2.0));

  InputProfile shipped = InputProfile::shipped();
  CHECK(shipped.at(0.0) == 32.5);
  for (double t = 0.0; t <= 80.0; t += 0.25) {
    CHECK(shipped.at(t) >= 27.0);
    CHECK(shipped.at(t) <= 35.0);
  }
  CHECK_NOTHROW(shipped.validate(80.0, 0.1));

  // negative lead speed is rejected
  InputProfile down{PolynomialInput{{1.0, -1.0}}};
  CHECK_THROWS_AS(down.validate(10.0, 0.1), ConfigError);

  // piecewise profiles must cover the horizon with increasing knots
  InputProfile short_pl{PiecewiseLinearInput{{0.0, 10.0}, {30.0, 31.0}}};
  CHECK_THROWS_AS(short_pl.validate(20.0, 0.1), ConfigError);
  InputProfile bad_order{PiecewiseLinearInput{{0.0, 5.0, 5.0}, {30.0, 31.0, 32.0}}};
  CHECK_THROWS_AS(bad_order.validate(5.0, 0.1), ConfigError);

  InputProfile pl{PiecewiseLinearInput{{0.0, 10.0, 20.0}, {30.0, 32.0, 28.0}}};
  CHECK(pl.at(5.0) == doctest::Approx(31.0));
  CHECK(pl.at(15.0) == doctest::Approx(30.0));
  CHECK(pl.at(25.0) == 28.0);  // clamps beyond the last knot
}

TEST_CASE("piecewise profile round-trips through CSV") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "cfident_profile_test.csv";
  {
    std::ofstream out(path);
    out << "t,u\n0,32.5\n10,28\n25,35\n";
  }
  InputProfile p = InputProfile::from_csv(path.string());
  CHECK(p.at(0.0) == 32.5);
  CHECK(p.at(5.0) == doctest::Approx(30.25));
  CHECK(p.at(25.0) == 35.0);
  fs::remove(path);
  CHECK_THROWS_AS(InputProfile::from_csv("/nonexistent/file.csv"), ConfigError);
}

TEST_CASE("scenario validation") {
  Scenario sc = shipped_scenario({72.7, 32.5});
  CHECK(sc.steps() == 800);
  CHECK_NOTHROW(sc.validate());

  Scenario bad = sc;
  bad.dt = 0.3;  // 80 / 0.3 is not an integer
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.dt = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("equilibrium initial condition is a fixed point of the Euler scheme") {
  // linear model: exactly constant, bit for bit
  const ModelSpec& cthrv = builtin_model("cthrv");
  double theta[] = {0.0216, 0.1943, 1.2293};
  State x0 = equilibrium_ic(cthrv, 31.0, theta);
  Scenario sc = shipped_scenario(x0);
  sc.input = InputProfile(ConstantInput{31.0});
  Trajectory traj = simulate(cthrv, sc, theta);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    CHECK(traj.gap[k] == x0.gap);
    CHECK(traj.speed[k] == 31.0);
  }

  // nonlinear models: constant to machine precision over the whole horizon
  struct Case {
    const char* name;
    std::vector<double> theta;
    double u0;
  };
  for (const Case& c : {Case{"ov", {1.8, 25.0, 14.0, 30.0}, 22.0},
                        Case{"idm", {10.0, 35.0, 1.5, 1.3, 2.0}, 30.0}}) {
    const ModelSpec& m = builtin_model(c.name);
    State eq = equilibrium_ic(m, c.u0, c.theta);
    Scenario s2 = shipped_scenario(eq);
    s2.input = InputProfile(ConstantInput{c.u0});
    Trajectory t2 = simulate(m, s2, c.theta);
    for (std::size_t k = 0; k < t2.size(); ++k) {
      CHECK(std::abs(t2.gap[k] - eq.gap) <= 1e-9);
      CHECK(std::abs(t2.speed[k] - c.u0) <= 1e-9);
    }
  }
}

TEST_CASE("step halving shrinks the discretization gap at first order") {
  const ModelSpec& m = builtin_model("cthrv");
  double theta[] = {0.0216, 0.1943, 1.2293};
  auto run = [&](double dt) {
    Scenario sc = shipped_scenario({60.0, 20.0});
    sc.dt = dt;
    return simulate(m, sc, theta);
  };
  Trajectory t02 = run(0.2), t01 = run(0.1), t005 = run(0.05);
  // max gap difference at shared sample times
  auto max_diff = [](const Trajectory& coarse, const Trajectory& fine, int stride) {
    double worst = 0.0;
    for (std::size_t k = 0; k < coarse.size(); ++k)
      worst = std::max(worst,
                       std::abs(coarse.gap[k] - fine.gap[k * static_cast<std::size_t>(stride)]));
    return worst;
  };
  double d1 = max_diff(t02, t01, 2);
  double d2 = max_diff(t01, t005, 2);
  CHECK(d1 < 0.5);
  CHECK(d2 < d1);
  CHECK(d1 / d2 == doctest::Approx(2.0).epsilon(0.4));  // O(dt): ratio near 2
}

TEST_CASE("euler converges to a high-order reference at first order") {
  const ModelSpec& m = builtin_model("cthrv");
  std::vector<double> theta = {0.0216, 0.1943, 1.2293};
  Scenario base = shipped_scenario({60.0, 20.0});
  base.horizon = 40.0;

  std::vector<double> sample_times;
  for (int k = 0; k <= 200; ++k) sample_times.push_back(0.2 * k);
  std::vector<double> ref = oracles::rk4_gap_reference(m, base, theta, 1e-3, sample_times);

  std::vector<double> errs;
  for (double dt : {0.2, 0.1, 0.05}) {
    Scenario sc = base;
    sc.dt = dt;
    Trajectory traj = simulate(m, sc, theta);
    int stride = static_cast<int>(std::llround(0.2 / dt));
    double worst = 0.0;
    for (std::size_t k = 0; k < sample_times.size(); ++k)
      worst = std::max(worst, std::abs(traj.gap[k * static_cast<std::size_t>(stride)] - ref[k]));
    errs.push_back(worst);
  }
  CHECK(errs[0] > errs[1]);
  CHECK(errs[1] > errs[2]);
  CHECK(errs[0] / errs[1] == doctest::Approx(2.0).epsilon(0.35));
  CHECK(errs[1] / errs[2] == doctest::Approx(2.0).epsilon(0.35));
}

TEST_CASE("domain violations and blow-ups abort with the step index") {
  const ModelSpec& ftl = builtin_model("ftl");
  double theta[] = {200.0, 1.5};
  Scenario sc = shipped_scenario({0.0, 30.0});
  CHECK_THROWS_WITH_AS(simulate(ftl, sc, theta), doctest::Contains("step 0"), DomainError);

  // v' = c v^2 escapes to infinity in finite time
  ModelSpec runaway("runaway", {{"c", 0.5, 2.0}}, "c*v*v", std::nullopt);
  double c[] = {1.0};
  Scenario sc2 = shipped_scenario({50.0, 10.0});
  CHECK_THROWS_AS(simulate(runaway, sc2, c), DomainError);
}

TEST_CASE("output error: symmetry, zero at equal parameters, positivity") {
  const ModelSpec& m = builtin_model("cthrv");
  Scenario sc = shipped_scenario({72.7, 32.5});
  std::vector<double> a = {0.4, 0.3, 1.7};
  std::vector<double> b = {0.5, 0.25, 1.9};
  CHECK(output_error(m, sc, a, a) == 0.0);
  CHECK(output_error(m, sc, a, b) == output_error(m, sc, b, a));
  CHECK(output_error(m, sc, a, b) > 0.0);

  // gap-and-speed output accumulates both components
  Scenario both = shipped_scenario({72.7, 32.5}, OutputMode::GapAndSpeed);
  CHECK(output_error(m, both, a, b) >= output_error(m, sc, a, b));
}

TEST_CASE("the k1 direction is invisible on the tau = s0/v0, k2 = v0/s0 set") {
  const ModelSpec& m = builtin_model("cthrv");
  Scenario sc = shipped_scenario({72.7, 32.5});
  double k2 = 32.5 / 72.7, tau = 72.7 / 32.5;
  std::vector<double> lo = {0.001, k2, tau};
  std::vector<double> hi = {1.0, k2, tau};
  double e = output_error(m, sc, lo, hi);
  CHECK(e <= 1e-10);

  // indistinguishable trajectories sample for sample (up to integration noise:
  // tau = fl(s0/v0) leaves s - tau v a few ulps off zero, which k1 then scales)
  Trajectory t1 = simulate(m, sc, lo);
  Trajectory t2 = simulate(m, sc, hi);
  for (std::size_t k = 0; k < t1.size(); ++k) CHECK(std::abs(t1.gap[k] - t2.gap[k]) <= 1e-10);

  // off the set, k1 is visible
  std::vector<double> off_lo = {0.001, 0.3, tau};
  std::vector<double> off_hi = {1.0, 0.3, tau};
  CHECK(output_error(m, sc, off_lo, off_hi) > 1e-4);
}

TEST_CASE("identifiable scenario has a strictly positive error off the truth") {
  const ModelSpec& m = builtin_model("cthrv");
  Scenario sc = shipped_scenario({60.0, 20.0});
  sc.input = InputProfile(ConstantInput{31.0});
  std::vector<double> truth = {0.0216, 0.1943, 1.2293};
  for (int i = 0; i < 3; ++i) {
    std::vector<double> other = truth;
    other[static_cast<std::size_t>(i)] *= 1.05;
    CHECK(output_error(m, sc, truth, other) > 0.0);
  }
}

TEST_CASE("paired_error early exit is sound") {
  const ModelSpec& m = builtin_model("cthrv");
  Scenario sc = shipped_scenario({72.7, 32.5});
  Simulator sim(m, sc);
  std::vector<double> a = {0.4, 0.3, 1.7};
  std::vector<double> b = {0.5, 0.25, 1.9};
  bool ok = true;
  double exact = sim.paired_error(a, b, std::numeric_limits<double>::infinity(), ok);
  REQUIRE(ok);
  CHECK(exact == output_error(m, sc, a, b));
  // a cap below the true error still classifies the pair as infeasible
  double capped = sim.paired_error(a, b, exact / 8.0, ok);
  CHECK(ok);
  CHECK(capped > exact / 8.0);
  // a cap at or above the true error returns the exact value
  CHECK(sim.paired_error(a, b, exact, ok) == exact);
}

TEST_CASE("error grid: identifiable scenario has its unique zero at theta_true") {
  const ModelSpec& m = builtin_model("cthrv");
  Scenario sc = shipped_scenario({60.0, 20.0});
  sc.input = InputProfile(ConstantInput{31.0});
  std::vector<double> truth = {0.0216, 0.1943, 1.2293};
  // 9x9 grid centered at the truth so the center cell hits it exactly
  ErrorGrid grid = error_grid(m, sc, truth, 0, 1, {0.0216 - 0.02, 0.0216 + 0.02},
                              {0.1943 - 0.15, 0.1943 + 0.15}, 9, 9);
  CHECK(grid.x_values[4] == doctest::Approx(0.0216).epsilon(1e-12));
  CHECK(grid.e[4][4] == 0.0);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j)
      if (i != 4 || j != 4)
        CHECK(grid.e[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] > 0.0);
}

TEST_CASE("error grid: equilibrium plus constant input is flat in k1 and k2") {
  const ModelSpec& m = builtin_model("cthrv");
  std::vector<double> truth = {0.0216, 0.1943, 1.2293};
  State x0 = equilibrium_ic(m, 31.0, truth);
  Scenario sc = shipped_scenario(x0);
  sc.input = InputProfile(ConstantInput{31.0});
  ErrorGrid grid = error_grid(m, sc, truth, 0, 1, {0.001, 1.0}, {0.01, 1.0}, 11, 11);
  double lo = 1e300, hi = -1e300;
  for (const auto& row : grid.e)
    for (double e : row) {
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
  CHECK(hi - lo <= 1e-10);
}

TEST_CASE("error grid: flat along k1 exactly on the unidentifiable set") {
  const ModelSpec& m = builtin_model("cthrv");
  Scenario sc = shipped_scenario({72.7, 32.5});
  double k2 = 32.5 / 72.7, tau = 72.7 / 32.5;
  std::vector<double> truth = {0.0216, k2, tau};
  ErrorGrid grid = error_grid(m, sc, truth, 0, 1, {0.001, 1.0}, {k2, k2}, 21, 1);
  for (const auto& row : grid.e) {
    REQUIRE(row.size() == 1);
    CHECK(row[0] <= 1e-10);
  }
}

TEST_CASE("error grid records failed cells as NaN") {
  const ModelSpec& ftl = builtin_model("ftl");
  Scenario sc = shipped_scenario({0.5, 40.0});
  sc.input = InputProfile(ConstantInput{20.0});
  sc.horizon = 10.0;
  std::vector<double> truth = {200.0, 2.0};
  // gap goes negative almost immediately: integer gamma keeps evaluating,
  // fractional gamma becomes a domain violation
  ErrorGrid grid = error_grid(ftl, sc, truth, 0, 1, {150.0, 300.0}, {1.5, 2.0}, 2, 2);
  int nan_cells = 0, finite_cells = 0;
  for (const auto& row : grid.e)
    for (double e : row) (std::isnan(e) ? nan_cells : finite_cells)++;
  CHECK(nan_cells == 2);
  CHECK(finite_cells == 2);
}

}  // TEST_SUITE
