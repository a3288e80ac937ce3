#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sdstab/example.hpp"
#include "sdstab/rng.hpp"
#include "sdstab/stability.hpp"

using namespace sdstab;

namespace {

ContinuousSystem integrator() {
  const auto vars = ContinuousSystem::field_layout(1, 1);
  return {1, 1, VectorExpression::parse({"u[0]"}, vars)};
}

/// Euler loop realizing x+ = (1 - T)(x) - T e exactly.
ClosedLoopModel contraction_loop() {
  const VariableLayout tv{{"x", 1}, {"T", 1}};
  return ClosedLoopModel::with_tableau(
      integrator(),
      match_controller(integrator(),
                       VectorExpression::parse({"(1 - T)*x"}, tv),
                       ErrorKind::StateMeasurement),
      ButcherTableau::builtin("euler"));
}

/// Exact flow of dx/dt = -ln(2) x: halves per unit time, so the tightest
/// certificate is K_ov = 1, lambda = ln 2.
ClosedLoopModel halving_flow() {
  const auto vars = ContinuousSystem::field_layout(1, 1);
  const ContinuousSystem sys{
      1, 1,
      VectorExpression::parse({"-0.6931471805599453*x[0] + 0*u[0]"}, vars)};
  const auto lv = ControlLaw::law_layout(1, 1);
  return ClosedLoopModel::with_exact_flow(
      sys, ControlLaw(1, 1, ErrorKind::StateMeasurement,
                      VectorExpression::parse({"0*x[0]"}, lv)));
}

IssCertificate plain_cert(double K_ov, double lambda) {
  IssCertificate c;
  c.K_ov = K_ov;
  c.lambda = lambda;
  return c;
}

}  // namespace

TEST_CASE("certificate validation and the decaying bound") {
  IssCertificate c = plain_cert(2.0, 0.5);
  CHECK_NOTHROW(c.validate());
  CHECK(c.beta(3.0, 2.0) == doctest::Approx(6.0 * std::exp(-1.0)).epsilon(1e-15));
  CHECK(c.beta(0.0, 1.0) == 0.0);

  CHECK_THROWS_AS(plain_cert(0.99, 0.5).validate(), ConfigError);
  CHECK_THROWS_AS(plain_cert(2.0, 0.0).validate(), ConfigError);
  CHECK_THROWS_AS(plain_cert(2.0, -1.0).validate(), ConfigError);
}

TEST_CASE("the period table stays monotone under arbitrary insertions") {
  IssCertificate cert = plain_cert(1.5, 1.0);
  Rng rng(61);
  for (int op = 0; op < 200; ++op) {
    const double M = rng.uniform(0.1, 10.0);
    const double E = rng.uniform(0.0, 5.0);
    const double T = rng.uniform(0.01, 1.0);
    cert.add_t_star(M, E, T);

    for (const auto& a : cert.t_star_table)
      for (const auto& b : cert.t_star_table)
        if (a.M <= b.M && a.E <= b.E) {
          REQUIRE(a.T_star >= b.T_star);
        }

    // Lookup mirrors the documented rule: the smallest covering entry.
    const double qM = rng.uniform(0.1, 10.0), qE = rng.uniform(0.0, 5.0);
    double expect = 0.0;
    bool found = false;
    for (const auto& entry : cert.t_star_table)
      if (entry.M >= qM && entry.E >= qE) {
        expect = found ? std::min(expect, entry.T_star) : entry.T_star;
        found = true;
      }
    REQUIRE(cert.t_star_for(qM, qE) == expect);
  }
  CHECK(plain_cert(1.0, 1.0).t_star_for(1.0, 1.0) == 0.0);
}

TEST_CASE("certificate transfer reproduces the closed-form parameter map") {
  ConsistencyCertificate cons;  // zero phi
  IssCertificate a = plain_cert(2.0, 1.0);
  const IssCertificate b = transfer_certificate(a, cons, 0.5, 0.25);
  CHECK(std::fabs(b.K_ov - 4.5) <= 1e-12);
  CHECK(std::fabs(b.lambda - std::log(2.0) / (std::log(8.0) + 1.0)) <= 1e-12);
  CHECK(b.gamma.is_zero());
  CHECK(b.provenance == CertProvenance::Transferred);
  CHECK(b.t_star_table.empty());

  // Independent recomputation in extended precision for random tuples.
  Rng rng(29);
  for (int i = 0; i < 5; ++i) {
    const double K_a = rng.uniform(1.0, 5.0);
    const double l_a = rng.uniform(0.2, 3.0);
    const double delta = rng.uniform(0.1, 0.95);
    const double eta = rng.uniform(1e-3, delta * 0.9);
    IssCertificate src = plain_cert(K_a, l_a);
    src.gamma = GainFunction::power(0.7, 2.0);
    ConsistencyCertificate link;
    link.phi = GainFunction::power(0.3, 1.0);

    const IssCertificate got = transfer_certificate(src, link, delta, eta);
    const long double Kb =
        (static_cast<long double>(K_a) + eta) / delta;
    const long double lb =
        -std::log(static_cast<long double>(delta)) /
        (std::log((static_cast<long double>(K_a)) / (delta - eta)) / l_a + 1.0L);
    const long double scale = Kb / (1.0L - delta) * delta + 1.0L;
    CHECK(std::fabs(got.K_ov - static_cast<double>(Kb)) <=
          1e-12 * static_cast<double>(Kb));
    CHECK(std::fabs(got.lambda - static_cast<double>(lb)) <=
          1e-12 * static_cast<double>(lb));
    for (const double s : {0.25, 1.0, 2.0}) {
      const long double want =
          scale * (0.7L * s * s + 0.3L * s);
      CHECK(got.gamma(s) ==
            doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
    }
  }

  CHECK_THROWS_AS(transfer_certificate(a, cons, 0.5, 0.5), ParameterOrder);
  CHECK_THROWS_AS(transfer_certificate(a, cons, 0.5, 0.6), ParameterOrder);
  CHECK_THROWS_AS(transfer_certificate(a, cons, 1.0, 0.25), ParameterOrder);
  CHECK_THROWS_AS(transfer_certificate(a, cons, 0.5, 0.0), ParameterOrder);
}

TEST_CASE("transfer approaches its boundary limits") {
  ConsistencyCertificate cons;
  const IssCertificate a = plain_cert(2.0, 1.0);
  const IssCertificate near1 = transfer_certificate(a, cons, 0.999999, 1e-9);
  CHECK(near1.K_ov == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(near1.lambda < 1e-4);
  CHECK(near1.lambda > 0.0);
}

TEST_CASE("trials confirm a sound bound on the exact contraction") {
  const ClosedLoopModel model = contraction_loop();
  IssCertificate cert = plain_cert(1.0, 0.9);
  const IssReport rep = verify_iss(model, cert, 2.0, 0.0, 0.5, 64, 101);
  CHECK(rep.pass);
  CHECK(rep.violations == 0);
  CHECK(rep.escapes == 0);
  CHECK(rep.worst_margin >= 0.0);
  CHECK(rep.trials == 64);
  CHECK(rep.horizon > 0.0);
  CHECK_FALSE(rep.witness.has_value());
}

TEST_CASE("an overclaimed decay rate is falsified with a witness") {
  const ClosedLoopModel model = contraction_loop();
  IssCertificate cert = plain_cert(1.0, 3.0);  // the map only decays at rate ~1
  const IssReport rep = verify_iss(model, cert, 2.0, 0.0, 0.5, 64, 102);
  CHECK_FALSE(rep.pass);
  CHECK(rep.violations > 0);
  CHECK(rep.worst_margin < 0.0);
  REQUIRE(rep.witness.has_value());
  CHECK(rep.witness->detail == "bound exceeded");
  CHECK(rep.witness->lhs > rep.witness->rhs);
  CHECK(norm2(rep.witness->x0) <= 2.0 + 1e-12);
}

TEST_CASE("the disturbance-free reference map satisfies its certificate") {
  IssCertificate cert = plain_cert(1.1, 1.5);
  const IssReport rep =
      verify_iss(example_reference_model(), cert, 5.0, 0.0, 0.05, 100, 103);
  CHECK(rep.pass);
  CHECK(rep.violations == 0);
  CHECK(rep.escapes == 0);
}

TEST_CASE("fitting recovers the geometric decay of the halving flow") {
  const ClosedLoopModel model = halving_flow();
  const IssCertificate cert = fit_iss(model, 2.0, 0.0, 0.5, 16, 104);
  // The true rate is ln 2 = 0.693...; the fit keeps a 0.9 safety factor.
  CHECK(cert.lambda >= 0.55);
  CHECK(cert.lambda <= 0.70);
  CHECK(cert.K_ov >= 1.0);
  CHECK(cert.K_ov <= 1.25);
  CHECK(cert.gamma.is_zero());  // E = 0: no disturbed stage
  CHECK(cert.provenance == CertProvenance::Fitted);
  CHECK(cert.t_star_for(2.0, 0.0) == 0.5);

  // Doubling the fitted rate must break on fresh trials.
  IssCertificate bold = cert;
  bold.lambda *= 2.0;
  CHECK_FALSE(verify_iss(model, bold, 2.0, 0.0, 0.5, 64, 105).pass);
}

TEST_CASE("fitting fails honestly outside the basin of attraction") {
  CHECK_THROWS_AS(fit_iss(example_euler_model(), 1000.0, 0.0, 0.02, 16, 106),
                  NoCertificate);
}

TEST_CASE("the fitted disturbance gain covers pure forced responses") {
  const ClosedLoopModel model = contraction_loop();
  const IssCertificate cert = fit_iss(model, 2.0, 1.0, 0.5, 24, 107);
  CHECK_FALSE(cert.gamma.is_zero());

  // From x0 = 0 the whole response is disturbance-driven, so the gain term
  // alone must dominate it.
  const IssReport rep = verify_iss(model, cert, 0.0, 1.0, 0.5, 64, 108);
  CHECK(rep.pass);
  CHECK(rep.worst_margin >= 0.0);
}

TEST_CASE("the admissible period search returns the cap when all periods pass") {
  const ClosedLoopModel model = contraction_loop();
  IssCertificate cert = plain_cert(1.0, 1.0);
  const double t = find_t_star(model, cert, 2.0, 0.0, 0.9, 1e-4, 32, 109);
  CHECK(t == 0.9);
  CHECK(cert.t_star_for(2.0, 0.0) == 0.9);

  IssCertificate hopeless = plain_cert(1.0, 5.0);
  CHECK_THROWS_AS(find_t_star(model, hopeless, 2.0, 0.0, 0.9, 1e-4, 32, 110),
                  NoAdmissiblePeriod);

  CHECK_THROWS_AS(find_t_star(model, cert, 2.0, 0.0, 0.0, 1e-4, 32, 111),
                  ConfigError);
}

TEST_CASE("lyapunov grid check accepts the linear contraction") {
  // V = x^2 on x+ = (1 - T)x: V+ - V = (-2T + T^2) x^2 <= -T x^2 for T <= 1.
  LyapunovSpec spec;
  spec.V = Expression::parse("x^2", VariableLayout{{"x", 1}});
  spec.K1 = 1.0;
  spec.K2 = 1.0;
  spec.K3 = 1.0;
  spec.N = 2.0;
  spec.rho_gain = 1.0;
  spec.T_tilde = 0.9;
  const LyapunovReport rep =
      check_lyapunov(contraction_loop(), spec, 2.0, 0.0, 41, 8);
  CHECK(rep.pass);
  CHECK(rep.checked > 0);
  CHECK(rep.worst_margin >= 0.0);
  CHECK_FALSE(rep.witness.has_value());
}

TEST_CASE("lyapunov spec validation") {
  LyapunovSpec spec;
  spec.V = Expression::parse("x^2", VariableLayout{{"x", 1}});
  CHECK_NOTHROW(spec.validate());
  spec.K1 = 2.0;  // K1 > K2 breaks the sandwich
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = LyapunovSpec{};
  spec.V = Expression::parse("x^2", VariableLayout{{"x", 1}});
  spec.T_tilde = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.T_tilde = 1.0;
  spec.rho_gain = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("the error gate excludes exactly the points it should") {
  // x+ = (1 - T)x + Te under V = x^2: inside the gate |e| <= 0.5|x| the
  // decrease holds with K3 = 0.5; outside it fails, but those points must be
  // skipped.
  const auto vars = ContinuousSystem::field_layout(1, 1);
  const ContinuousSystem sys{1, 1,
                             VectorExpression::parse({"-x[0] + u[0]"}, vars)};
  const auto lv = ControlLaw::law_layout(1, 1);
  const ClosedLoopModel model = ClosedLoopModel::with_tableau(
      sys,
      ControlLaw(1, 1, ErrorKind::StateMeasurement,
                 VectorExpression::parse({"e[0]"}, lv)),
      ButcherTableau::builtin("euler"));

  LyapunovSpec spec;
  spec.V = Expression::parse("x^2", VariableLayout{{"x", 1}});
  spec.K1 = 1.0;
  spec.K2 = 1.0;
  spec.K3 = 0.5;
  spec.N = 2.0;
  spec.rho_gain = 0.5;
  spec.T_tilde = 0.9;

  const LyapunovReport rep = check_lyapunov(model, spec, 2.0, 1.0, 41, 8);
  CHECK(rep.pass);
  CHECK(rep.skipped > 0);
  CHECK(rep.checked > 0);

  // Demanding ten times the decrease rate fails inside the gate.
  LyapunovSpec greedy = spec;
  greedy.K3 = 5.0;
  const LyapunovReport bad = check_lyapunov(model, greedy, 2.0, 1.0, 41, 8);
  CHECK_FALSE(bad.pass);
  REQUIRE(bad.witness.has_value());
  CHECK(bad.witness->detail == "decrease condition violated");

  // A false sandwich is caught regardless of the dynamics.
  LyapunovSpec lopsided = spec;
  lopsided.V = Expression::parse("2*x^2", VariableLayout{{"x", 1}});
  const LyapunovReport sand = check_lyapunov(model, lopsided, 2.0, 1.0, 41, 8);
  CHECK_FALSE(sand.pass);
  REQUIRE(sand.witness.has_value());
  CHECK(sand.witness->detail == "sandwich bound violated");
}

TEST_CASE("intersample envelopes require the exact backend") {
  const ClosedLoopModel euler = contraction_loop();
  const Trajectory traj = simulate(euler, {1.0}, SamplingSchedule::fixed({0.1}),
                                   DisturbanceSignal::zero(1));
  IssCertificate cert = plain_cert(1.0, 0.9);
  CHECK_THROWS_AS(intersample_envelope(euler, traj, cert, 2.0, 0.0, 16),
                  ConfigError);
}

TEST_CASE("intersample envelope bounds the continuous flow between samples") {
  const ContinuousSystem sys = integrator();
  const VariableLayout tv{{"x", 1}, {"T", 1}};
  const ClosedLoopModel model = ClosedLoopModel::with_exact_flow(
      sys, match_controller(sys, VectorExpression::parse({"(1 - T)*x"}, tv),
                            ErrorKind::StateMeasurement));

  const SamplingSchedule sched = SamplingSchedule::uniform_random(0.3, 30, 71);
  const DisturbanceSignal dist = DisturbanceSignal::uniform(1, 0.5, 72);
  const Trajectory traj = simulate(model, {1.5}, sched, dist);
  REQUIRE(traj.status == TrajectoryStatus::Complete);

  IssCertificate cert = plain_cert(1.05, 0.8);
  cert.gamma = GainFunction::power(1.3, 1.0);
  const IntersampleReport rep =
      intersample_envelope(model, traj, cert, 1.5, 0.5, 24);
  CHECK(rep.pass);
  CHECK(rep.worst_margin >= 0.0);
  CHECK(rep.intervals == traj.steps());
  CHECK(rep.points == 24 * traj.steps());
  CHECK(rep.C > 0.0);
  CHECK(rep.R == doctest::Approx(1.05 * 1.5 + cert.gamma(0.5)).epsilon(1e-12));

  // The zero trajectory satisfies any envelope.
  const Trajectory still = simulate(model, {0.0}, sched,
                                    DisturbanceSignal::zero(1));
  CHECK(intersample_envelope(model, still, cert, 1.5, 0.5, 8).pass);

  // A tampered recorded state no longer matches its re-integration.
  Trajectory forged = traj;
  forged.states[1][0] += 1e-3;
  CHECK_THROWS_AS(intersample_envelope(model, forged, cert, 1.5, 0.5, 8),
                  OracleMismatch);
}
