#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sdstab/consistency.hpp"
#include "sdstab/example.hpp"
#include "sdstab/rng.hpp"

using namespace sdstab;

namespace {

ContinuousSystem integrator() {
  const auto vars = ContinuousSystem::field_layout(1, 1);
  return {1, 1, VectorExpression::parse({"u[0]"}, vars)};
}

ClosedLoopModel matched_integrator_euler() {
  const VariableLayout tv{{"x", 1}, {"T", 1}};
  return ClosedLoopModel::with_tableau(
      integrator(),
      match_controller(integrator(),
                       VectorExpression::parse({"(1 - T)*x"}, tv),
                       ErrorKind::StateMeasurement),
      ButcherTableau::builtin("euler"));
}

}  // namespace

TEST_CASE("gain functions form a printable positive cone") {
  const GainFunction zero;
  CHECK(zero.is_zero());
  CHECK(zero(0.0) == 0.0);
  CHECK(zero(10.0) == 0.0);
  CHECK(zero.print() == "0");

  const GainFunction g = GainFunction::power(3.0, 5.0)
                             .plus(GainFunction::power(0.5, 1.0));
  CHECK(g.print() == "3*s^5 + 0.5*s");
  CHECK(g(0.0) == 0.0);
  CHECK(g(1.0) == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(g(2.0) == doctest::Approx(3.0 * 32.0 + 1.0).epsilon(1e-15));

  // Strictly increasing on [0, inf).
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(0.0, 4.0), b = a + rng.uniform(0.001, 1.0);
    CHECK(g(a) < g(b));
  }

  // Addition merges equal exponents; scaling multiplies coefficients.
  const GainFunction merged =
      GainFunction::power(1.0, 2.0).plus(GainFunction::power(2.5, 2.0));
  CHECK(merged.terms().size() == 1);
  CHECK(merged(3.0) == doctest::Approx(3.5 * 9.0).epsilon(1e-15));
  CHECK(g.scaled(2.0)(1.0) == doctest::Approx(7.0).epsilon(1e-15));
  CHECK(g.scaled(0.0).is_zero());

  CHECK(GainFunction::power(0.0, 3.0).is_zero());
  CHECK_THROWS_AS(GainFunction::power(-1.0, 2.0), ConfigError);
  CHECK_THROWS_AS(GainFunction::power(1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(GainFunction::power(1.0, -2.0), ConfigError);
  CHECK_THROWS_AS((void)g.scaled(-1.0), ConfigError);
  CHECK_THROWS_AS(g(-0.5), DomainError);
}

TEST_CASE("fitted gain envelopes dominate every sample point") {
  Rng rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::pair<double, double>> pts;
    const double c1 = rng.uniform(0.1, 2.0), c2 = rng.uniform(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
      const double s = rng.uniform(0.001, 2.0);
      const double y =
          (c1 * s + c2 * s * s * s) * rng.uniform(0.0, 1.0);
      pts.push_back({s, y});
    }
    const GainFunction env = fit_gain_envelope(pts, 2.0);
    CHECK(env.terms().size() <= 2);
    for (const auto& [s, y] : pts) {
      CHECK(env(s) >= y * (1.0 - 1e-8) - 1e-12);
    }
  }

  // All-zero data fits the zero gain; negative s values are ignored.
  CHECK(fit_gain_envelope({{0.5, 0.0}, {1.0, 1e-13}}, 1.0).is_zero());
  CHECK(fit_gain_envelope({}, 1.0).is_zero());
  CHECK(fit_gain_envelope({{-1.0, 5.0}}, 1.0).is_zero());
}

TEST_CASE("the one-step recursion bound has its closed form and ordering") {
  ConsistencyCertificate cert;
  cert.K = 1.0;
  cert.rho_c = 1.0;
  cert.T_star = 0.2;
  cert.M = 1.0;
  cert.E = 0.0;

  // (1 + 0.1) * 0.5 + 0.1 * (0.1 * 1) * (1 + 0) = 0.56.
  CHECK(repmc_alpha(cert, 0.5, 0.1) == doctest::Approx(0.56).epsilon(1e-15));

  CHECK_THROWS_AS(repmc_alpha(cert, -0.1, 0.1), ConfigError);
  CHECK_THROWS_AS(repmc_alpha(cert, 0.5, 0.3), ConfigError);
  CHECK_THROWS_AS(repmc_alpha(cert, 0.5, 0.0), ConfigError);

  // Nondecreasing in delta at fixed T.
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double d1 = rng.uniform(0.0, 2.0);
    const double d2 = d1 + rng.uniform(0.0, 1.0);
    const double T = rng.uniform(1e-6, 0.2 - 1e-9);
    CHECK(repmc_alpha(cert, d1, T) <= repmc_alpha(cert, d2, T));
  }

  // With no mismatch inflow the recursion fixes the origin.
  ConsistencyCertificate tight = cert;
  tight.rho_c = 0.0;
  CHECK(repmc_alpha(tight, 0.0, 0.1) == 0.0);
}

TEST_CASE("the multistep period bound keeps iterated mismatch below target") {
  ConsistencyCertificate cert;
  cert.K = 1.2;
  cert.rho_c = 0.8;
  cert.phi = GainFunction::power(0.3, 2.0);
  cert.T_star = 0.3;
  cert.M = 2.0;
  cert.E = 0.5;

  const double H = 2.0, eta = 0.15;
  const double T_L = multistep_period_bound(cert, H, eta);

  // Independent evaluation of the declared formula.
  const double denom = std::exp(cert.K * H) * H;
  const double expect = std::min(
      {cert.T_star, (eta / denom) / cert.rho_c, (1.0 / denom) / cert.rho_c});
  CHECK(T_L == doctest::Approx(expect).epsilon(1e-12));
  CHECK(T_L > 0.0);

  // Realization: iterating alpha from 0 over any schedule with periods
  // below T_L and total time <= H stays below eta*M + phi(E).
  const double target = eta * cert.M + cert.phi(cert.E) + 1e-12;
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    double delta = 0.0, elapsed = 0.0;
    while (elapsed < H) {
      double T = T_L * rng.next_open_unit();
      if (elapsed + T > H) T = H - elapsed;
      if (!(T > 0.0)) break;
      delta = repmc_alpha(cert, delta, std::min(T, T_L * (1.0 - 1e-12)));
      elapsed += T;
    }
    REQUIRE(delta <= target);
  }

  CHECK_THROWS_AS(multistep_period_bound(cert, 0.0, eta), ConfigError);
  CHECK_THROWS_AS(multistep_period_bound(cert, H, 0.0), ConfigError);
}

TEST_CASE("the euler mismatch law recovers the curvature ratio one half") {
  const auto vars = ContinuousSystem::field_layout(1, 1);
  const ContinuousSystem sys{1, 1,
                             VectorExpression::parse({"-x[0] + 0*u[0]"}, vars)};
  const Box states{{0.5}, {1.0}};
  const Box inputs{{-0.1}, {0.1}};

  // |exact - euler| / (T^2 |f|) tends to 1/2 as T -> 0 on this field.
  const double T_small = std::ldexp(1.0, -10);
  const MismatchLaw fine = euler_mismatch_law(sys, states, inputs, {T_small}, 128);
  CHECK(fine.L_bar >= 0.45);
  CHECK(fine.L_bar <= 0.55);

  std::vector<double> grid;
  for (int p = 4; p <= 10; ++p) grid.push_back(std::ldexp(1.0, -p));
  const MismatchLaw law = euler_mismatch_law(sys, states, inputs, grid, 128);
  CHECK(law.slope >= 1.85);
  CHECK(law.slope <= 2.15);
  CHECK(law.skipped == 0);
  REQUIRE(law.per_T.size() == grid.size());
  CHECK(law.per_T.front().first == grid.front());

  // At an equilibrium box the ratio is undefined and everything is skipped.
  const Box origin{{0.0}, {0.0}};
  const MismatchLaw still = euler_mismatch_law(sys, origin, inputs, {0.1}, 16);
  CHECK(still.L_bar == 0.0);
  CHECK(still.skipped == 16);

  CHECK_THROWS_AS(euler_mismatch_law(sys, states, inputs, {}, 16), ConfigError);
  CHECK_THROWS_AS(euler_mismatch_law(sys, Box{{0.0}, {1.0, 2.0}}, inputs,
                                     {0.1}, 16),
                  ConfigError);
}

TEST_CASE("a model is consistent with itself at zero mismatch gain") {
  const ClosedLoopModel model = matched_integrator_euler();
  const ConsistencyCertificate cert =
      fit_repc(model, model, 2.0, 0.5, 0.5, 600, 42);
  CHECK(cert.rho_c == 0.0);
  CHECK(cert.phi.is_zero());
  CHECK(cert.T_star == 0.5);
  CHECK(cert.M == 2.0);
  CHECK(cert.E == 0.5);
  CHECK(cert.fit.halvings == 0);
  CHECK(cert.K > 0.0);  // the loop's own field variation is still nonzero
  CHECK(cert.fit.max_violation == 0.0);

  CHECK(validate_repc(cert, model, model, 400, 7) >= 0.0);

  CHECK_THROWS_AS(fit_repc(model, model, -1.0, 0.5, 0.5, 600, 42), ConfigError);
  CHECK_THROWS_AS(fit_repc(model, model, 2.0, 0.5, 0.0, 600, 42), ConfigError);
  CHECK_THROWS_AS(fit_repc(model, model, 2.0, 0.5, 0.5, 10, 42), ConfigError);
}

TEST_CASE("certificates fit, validate and compose across model refinements") {
  const ClosedLoopModel euler = example_euler_model();
  const ClosedLoopModel exact = example_exact_model();
  const ClosedLoopModel heun = ClosedLoopModel::with_tableau(
      example_system(), example_matched_law(), ButcherTableau::builtin("heun"));

  const double M = 6.0, E = 1.0, T_cap = 0.02;
  const ConsistencyCertificate ab = fit_repc(heun, euler, M, E, T_cap, 2000, 5);
  const ConsistencyCertificate bc = fit_repc(euler, exact, M, E, T_cap, 2000, 6);

  CHECK(ab.T_star > 0.0);
  CHECK(bc.T_star > 0.0);
  CHECK(ab.K > 0.0);
  CHECK(bc.rho_c > 0.0);  // euler and the true flow genuinely differ
  CHECK(ab.fit.max_violation == 0.0);
  CHECK(bc.fit.max_violation == 0.0);

  // Fresh-seed validation stays clean on both pairs and, by symmetry of the
  // mismatch inequality, with the models swapped.
  CHECK(validate_repc(ab, heun, euler, 500, 81) >= 0.0);
  CHECK(validate_repc(bc, euler, exact, 500, 82) >= 0.0);
  CHECK(validate_repc(ab, euler, heun, 500, 83) >= 0.0);

  const ConsistencyCertificate ac = compose_repc(ab, bc, heun, exact, 800, 9);
  CHECK(ac.K == ab.K);
  CHECK(ac.rho_c == doctest::Approx(ab.rho_c + bc.rho_c).epsilon(1e-15));
  CHECK(ac.T_star == std::min(ab.T_star, bc.T_star));
  for (const double s : {0.1, 0.5, 1.0})
    CHECK(ac.phi(s) == doctest::Approx(ab.phi(s) + bc.phi(s)).epsilon(1e-12));

  // Composition requires matching regions.
  ConsistencyCertificate shrunk = bc;
  shrunk.M = 5.0;
  CHECK_THROWS_AS(compose_repc(ab, shrunk, heun, exact, 200, 9), ConfigError);
}

TEST_CASE("multistep consistency holds trivially for identical models") {
  const ClosedLoopModel model = matched_integrator_euler();
  const ConsistencyCertificate cert =
      fit_repc(model, model, 2.0, 0.5, 0.5, 600, 42);
  const RepmcOutcome out = check_repmc(model, model, cert, 2.0, 0.5, 3.0,
                                       0.1, 40, 4);
  CHECK(out.T_L == std::min(cert.T_star, model.law().T_u()));
  CHECK(out.halvings == 0);
  CHECK(out.worst_margin >= 0.0);
  CHECK(out.trials == 40);
}

TEST_CASE("multistep consistency finds a positive period across backends") {
  const ClosedLoopModel euler = example_euler_model();
  const ClosedLoopModel exact = example_exact_model();
  const ConsistencyCertificate cert =
      fit_repc(euler, exact, 5.0, 1.0, 0.02, 2000, 14);
  const RepmcOutcome out =
      check_repmc(euler, exact, cert, 5.0, 1.0, 3.0, 0.1, 25, 15);
  CHECK(out.T_L > 0.0);
  CHECK(out.T_L <= cert.T_star);
  CHECK(out.worst_margin >= 0.0);

  ConsistencyCertificate small = cert;
  small.M = 0.5;
  CHECK_THROWS_AS(check_repmc(euler, exact, small, 5.0, 1.0, 3.0, 0.1, 10, 15),
                  ConfigError);
}

TEST_CASE("the matched loop holds the origin fixed without disturbance") {
  const Trajectory traj =
      simulate(example_euler_model(), {0.0},
               SamplingSchedule::uniform_random(0.02, 200, 44),
               DisturbanceSignal::zero(1));
  REQUIRE(traj.status == TrajectoryStatus::Complete);
  for (const Vec& x : traj.states) CHECK(std::fabs(x[0]) <= 1e-9);
}
