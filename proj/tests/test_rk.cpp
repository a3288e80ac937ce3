#include <cmath>
#include <vector>

#include "doctest.h"
#include "sdstab/rk.hpp"
#include "sdstab/rng.hpp"
#include "sdstab/systems.hpp"

using namespace sdstab;

namespace {

// ============================================================================
// Hand oracles for the linear field f = -x. Each method applied to f = -x
// multiplies the state by a fixed polynomial in T, derived once by expanding
// the stage recursion by hand:
//   euler: 1 - T
//   heun:  1 - T + T^2/2
//   rk4:   1 - T + T^2/2 - T^3/6 + T^4/24
// ============================================================================

double euler_decay(double T) { return 1.0 - T; }
double heun_decay(double T) { return 1.0 - T + T * T / 2.0; }
double rk4_decay(double T) {
  return 1.0 - T + T * T / 2.0 - T * T * T / 6.0 + T * T * T * T / 24.0;
}

ContinuousSystem linear_decay() {
  const auto vars = ContinuousSystem::field_layout(1, 1);
  return {1, 1, VectorExpression::parse({"-x[0] + 0*u[0]"}, vars)};
}

/// Least-squares slope of ln(err) against ln(T).
double loglog_slope(const std::vector<std::pair<double, double>>& pts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [T, err] : pts) {
    const double lx = std::log(T), ly = std::log(err);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(pts.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("builtin tableaus are consistent and correctly shaped") {
  for (const char* name : {"euler", "heun", "rk4"}) {
    const ButcherTableau t = ButcherTableau::builtin(name);
    CHECK(t.name == name);
    CHECK(std::fabs(t.weight_sum() - 1.0) <= 1e-12);
    CHECK_NOTHROW(t.validate());
  }
  CHECK(ButcherTableau::builtin("euler").stages == 1);
  CHECK(ButcherTableau::builtin("heun").stages == 2);
  CHECK(ButcherTableau::builtin("rk4").stages == 4);
  CHECK_THROWS_AS(ButcherTableau::builtin("midpoint"), UnknownTableau);
  CHECK_THROWS_AS(ButcherTableau::builtin(""), UnknownTableau);
}

TEST_CASE("tableau validation rejects malformed coefficient sets") {
  ButcherTableau t = ButcherTableau::builtin("heun");
  t.a[1] = 0.25;  // a(0,1): upper triangle of an explicit method
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);

  t = ButcherTableau::builtin("heun");
  t.b = {0.7, 0.7};
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);

  t = ButcherTableau::builtin("heun");
  t.b.pop_back();
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);

  t.stages = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t.stages = 17;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);

  t = ButcherTableau::builtin("euler");
  t.a = {std::nan("")};
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("one step on the linear field matches the hand polynomials") {
  const ContinuousSystem sys = linear_decay();
  const Vec u{0.0};
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    const double x0 = rng.uniform(-5.0, 5.0);
    const double T = rng.uniform(0.01, 1.0);
    const Vec x{x0};
    CHECK(rk_step(sys, ButcherTableau::builtin("euler"), x, u, T)[0] ==
          doctest::Approx(x0 * euler_decay(T)).epsilon(1e-14));
    CHECK(rk_step(sys, ButcherTableau::builtin("heun"), x, u, T)[0] ==
          doctest::Approx(x0 * heun_decay(T)).epsilon(1e-14));
    CHECK(rk_step(sys, ButcherTableau::builtin("rk4"), x, u, T)[0] ==
          doctest::Approx(x0 * rk4_decay(T)).epsilon(1e-14));
  }
  // Frozen spot values at x = 1, T = 1/2 (exact binary fractions).
  const Vec one{1.0};
  CHECK(rk_step(sys, ButcherTableau::builtin("euler"), one, u, 0.5)[0] == 0.5);
  CHECK(rk_step(sys, ButcherTableau::builtin("heun"), one, u, 0.5)[0] == 0.625);
  CHECK(rk_step(sys, ButcherTableau::builtin("rk4"), one, u, 0.5)[0] ==
        doctest::Approx(233.0 / 384.0).epsilon(1e-14));
}

TEST_CASE("held input enters every stage") {
  // f = u: every method integrates a constant exactly, F = x + T*u.
  const auto vars = ContinuousSystem::field_layout(1, 1);
  const ContinuousSystem sys{1, 1, VectorExpression::parse({"u[0]"}, vars)};
  for (const char* name : {"euler", "heun", "rk4"}) {
    const Vec got =
        rk_step(sys, ButcherTableau::builtin(name), {2.0}, {3.0}, 0.25);
    CHECK(got[0] == doctest::Approx(2.75).epsilon(1e-15));
  }
}

TEST_CASE("vector states advance componentwise") {
  // Harmonic oscillator under euler: (x0, x1) -> (x0 + T x1, x1 - T x0).
  const auto vars = ContinuousSystem::field_layout(2, 1);
  const ContinuousSystem sys{
      2, 1, VectorExpression::parse({"x[1] + 0*u[0]", "-x[0]"}, vars)};
  const Vec got =
      rk_step(sys, ButcherTableau::builtin("euler"), {1.0, 2.0}, {0.0}, 0.1);
  CHECK(got[0] == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(got[1] == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("one-step error against the true flow has the expected order") {
  const ContinuousSystem sys = linear_decay();
  const Vec x{1.0}, u{0.0};
  const auto errs = [&](const char* name, int lo2, int hi2) {
    const ButcherTableau t = ButcherTableau::builtin(name);
    std::vector<std::pair<double, double>> pts;
    for (int p = lo2; p <= hi2; ++p) {
      const double T = std::ldexp(1.0, -p);
      pts.emplace_back(T, std::fabs(rk_step(sys, t, x, u, T)[0] - std::exp(-T)));
    }
    return pts;
  };
  CHECK(loglog_slope(errs("euler", 3, 8)) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(loglog_slope(errs("heun", 3, 8)) == doctest::Approx(3.0).epsilon(0.05));
  CHECK(loglog_slope(errs("rk4", 1, 5)) == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("dimension mismatches are rejected") {
  const ContinuousSystem sys = linear_decay();
  const ButcherTableau t = ButcherTableau::builtin("euler");
  CHECK_THROWS_AS(rk_step(sys, t, {1.0, 2.0}, {0.0}, 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(rk_step(sys, t, {1.0}, {}, 0.1), std::invalid_argument);
}
