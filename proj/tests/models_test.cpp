#include <doctest.h>

#include <cmath>

#include "cfident/models.hpp"
#include "support/oracles.hpp"

using namespace cfident;

TEST_SUITE("models") {

TEST_CASE("catalog bounds match the published table value for value") {
  const ModelSpec& cthrv = builtin_model("cthrv");
  REQUIRE(cthrv.param_count() == 3);
  CHECK(cthrv.params()[0].name == "k1");
  CHECK(cthrv.params()[0].lower == 0.001);
  CHECK(cthrv.params()[0].upper == 1.0);
  CHECK(cthrv.params()[1].name == "k2");
  CHECK(cthrv.params()[1].lower == 0.01);
  CHECK(cthrv.params()[1].upper == 1.0);
  CHECK(cthrv.params()[2].name == "tau");
  CHECK(cthrv.params()[2].lower == 0.1);
  CHECK(cthrv.params()[2].upper == 3.0);

  const ModelSpec& ov = builtin_model("ov");
  REQUIRE(ov.param_count() == 4);
  CHECK(ov.params()[0].name == "alpha");
  CHECK(ov.params()[0].lower == 0.5);
  CHECK(ov.params()[0].upper == 3.3);
  CHECK(ov.params()[1].name == "a");
  CHECK(ov.params()[1].lower == 10.0);
  CHECK(ov.params()[1].upper == 32.0);
  CHECK(ov.params()[2].name == "hm");
  CHECK(ov.params()[2].lower == 2.0);
  CHECK(ov.params()[2].upper == 30.0);
  CHECK(ov.params()[3].name == "b");
  CHECK(ov.params()[3].lower == 18.0);
  CHECK(ov.params()[3].upper == 45.0);

  const ModelSpec& ftl = builtin_model("ftl");
  REQUIRE(ftl.param_count() == 2);
  CHECK(ftl.params()[0].name == "C");
  CHECK(ftl.params()[0].lower == 100.0);
  CHECK(ftl.params()[0].upper == 600.0);
  CHECK(ftl.params()[1].name == "gamma");
  CHECK(ftl.params()[1].lower == 1.0);
  CHECK(ftl.params()[1].upper == 3.0);

  const ModelSpec& idm = builtin_model("idm");
  REQUIRE(idm.param_count() == 5);
  CHECK(idm.params()[0].name == "sj");
  CHECK(idm.params()[0].lower == 3.0);
  CHECK(idm.params()[0].upper == 25.0);
  CHECK(idm.params()[1].name == "vf");
  CHECK(idm.params()[1].lower == 21.0);
  CHECK(idm.params()[1].upper == 41.0);
  CHECK(idm.params()[2].name == "T");
  CHECK(idm.params()[2].lower == 0.1);
  CHECK(idm.params()[2].upper == 3.0);
  CHECK(idm.params()[3].name == "a");
  CHECK(idm.params()[3].lower == 0.1);
  CHECK(idm.params()[3].upper == 3.0);
  CHECK(idm.params()[4].name == "b");
  CHECK(idm.params()[4].lower == 0.5);
  CHECK(idm.params()[4].upper == 5.0);

  CHECK_THROWS_AS(builtin_model("gipps"), Error);
  CHECK(&builtin_model("CTH-RV") == &cthrv);  // alias
}

TEST_CASE("cthrv acceleration at the worked numeric point") {
  const ModelSpec& m = builtin_model("cthrv");
  double theta[] = {0.01, 0.12, 1.4};
  CHECK(acceleration(m, {40.0, 33.0}, 30.0, theta) == doctest::Approx(-0.422).epsilon(1e-12));
}

TEST_CASE("equilibrium initial conditions") {
  const ModelSpec& cthrv = builtin_model("cthrv");
  double theta[] = {0.0216, 0.1943, 1.2293};
  State x0 = equilibrium_ic(cthrv, 31.0, theta);
  CHECK(x0.speed == 31.0);
  CHECK(x0.gap == doctest::Approx(38.1083).epsilon(1e-9));
  CHECK(x0.gap == doctest::Approx(38.1).epsilon(1e-3));

  State zero = equilibrium_ic(cthrv, 0.0, theta);
  CHECK(zero.gap == 0.0);
  CHECK(zero.speed == 0.0);

  const ModelSpec& idm = builtin_model("idm");
  double idm_theta[] = {10.0, 35.0, 1.5, 1.3, 2.0};
  State idm_x0 = equilibrium_ic(idm, 30.0, idm_theta);
  CHECK(std::abs(acceleration(idm, idm_x0, 30.0, idm_theta)) <= 1e-9);

  // IDM equilibrium needs u0 < vf
  CHECK_THROWS_AS(equilibrium_ic(idm, 36.0, idm_theta), DomainError);

  // OV equilibrium only exists while the atanh argument stays inside (-1,1)
  const ModelSpec& ov = builtin_model("ov");
  double ov_theta[] = {1.0, 10.0, 2.0, 45.0};
  CHECK_THROWS_AS(equilibrium_ic(ov, 40.0, ov_theta), DomainError);
  double ov_ok[] = {1.0, 30.0, 15.0, 30.0};
  State ov_x0 = equilibrium_ic(ov, 25.0, ov_ok);
  CHECK(std::abs(acceleration(ov, ov_x0, 25.0, ov_ok)) <= 1e-9);

  // FTL leaves the gap free; it must be supplied
  const ModelSpec& ftl = builtin_model("ftl");
  double ftl_theta[] = {200.0, 1.5};
  CHECK_THROWS_AS(equilibrium_ic(ftl, 30.0, ftl_theta), DomainError);
  State ftl_x0 = equilibrium_ic(ftl, 30.0, ftl_theta, 55.0);
  CHECK(ftl_x0.gap == 55.0);
  CHECK(acceleration(ftl, ftl_x0, 30.0, ftl_theta) == 0.0);
}

TEST_CASE("equilibrium consistency at random points") {
  Rng rng(101);
  for (const auto& name : builtin_model_names()) {
    const ModelSpec& m = builtin_model(name);
    int done = 0;
    while (done < 1000) {
      std::vector<double> theta;
      for (const auto& p : m.params()) theta.push_back(rng.uniform(p.lower, p.upper));
      double u0 = rng.uniform(1.0, 40.0);
      std::optional<double> gap;
      if (!m.equilibrium_gap()) gap = rng.uniform(5.0, 120.0);
      State x0;
      try {
        x0 = equilibrium_ic(m, u0, theta, gap);
      } catch (const DomainError&) {
        continue;  // no equilibrium for this draw
      }
      CHECK(std::abs(acceleration(m, x0, u0, theta)) <= 1e-9);
      ++done;
    }
  }
}

TEST_CASE("ov optimal velocity is strictly increasing in the gap") {
  const ModelSpec& ov = builtin_model("ov");
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    double alpha = rng.uniform(0.5, 3.3);
    double theta[] = {alpha, rng.uniform(10.0, 32.0), rng.uniform(2.0, 30.0),
                      rng.uniform(18.0, 45.0)};
    // with v = 0 the dynamics reduce to alpha * V(s)
    double prev = -1e300;
    for (double s = 1.0; s <= 200.0; s += 2.0) {
      double V = acceleration(ov, {s, 0.0}, 10.0, theta) / alpha;
      CHECK(V > prev);
      prev = V;
    }
  }
}

TEST_CASE("ftl domain violations propagate") {
  const ModelSpec& ftl = builtin_model("ftl");
  double theta[] = {200.0, 1.5};
  CHECK_THROWS_AS(acceleration(ftl, {0.0, 30.0}, 31.0, theta), DomainError);
}

TEST_CASE("custom models go through the same machinery") {
  ModelSpec linear("linear-follower", {{"k", 0.1, 2.0}}, "k*(u - v)", std::nullopt);
  double theta[] = {0.5};
  CHECK(acceleration(linear, {10.0, 20.0}, 26.0, theta) == doctest::Approx(3.0));

  CHECK_THROWS_AS(ModelSpec("bad", {{"k", 2.0, 1.0}}, "k*(u - v)", std::nullopt), Error);
  CHECK_THROWS_AS(ModelSpec("bad2", {{"k", 0.1, 1.0}}, "k*(u - w)", std::nullopt), ParseError);
}

}  // TEST_SUITE
