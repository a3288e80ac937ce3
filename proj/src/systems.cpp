#include "sdstab/systems.hpp"

#include <algorithm>
#include <cmath>

#include "sdstab/rng.hpp"

namespace sdstab {

// ---------------------------------------------------------------------------
// ContinuousSystem / ControlLaw
// ---------------------------------------------------------------------------

VariableLayout ContinuousSystem::field_layout(std::size_t state_dim,
                                              std::size_t input_dim) {
  return VariableLayout{{"x", state_dim}, {"u", input_dim}};
}

ContinuousSystem::ContinuousSystem(std::size_t state_dim,
                                   std::size_t input_dim, VectorExpression f)
    : state_dim_(state_dim), input_dim_(input_dim), f_(std::move(f)) {
  if (state_dim_ == 0 || input_dim_ == 0)
    throw std::invalid_argument("system dimensions must be >= 1");
  if (f_.size() != state_dim_)
    throw std::invalid_argument("f must have one component per state");
  if (f_.variables() != field_layout(state_dim_, input_dim_))
    throw std::invalid_argument("f must be declared over {x:n, u:m}");
}

void ContinuousSystem::eval_f(const double* x, const double* u,
                              double* out) const {
  const EvalView views[2] = {{x, state_dim_}, {u, input_dim_}};
  f_.evaluate(views, 2, out);
}

Vec ContinuousSystem::eval_f(const Vec& x, const Vec& u) const {
  Vec out(state_dim_);
  eval_f(x.data(), u.data(), out.data());
  return out;
}

VariableLayout ControlLaw::law_layout(std::size_t state_dim,
                                      std::size_t error_dim) {
  return VariableLayout{{"x", state_dim}, {"e", error_dim}, {"T", 1}};
}

ControlLaw::ControlLaw(std::size_t state_dim, std::size_t error_dim,
                       ErrorKind kind, VectorExpression U, double T_u)
    : state_dim_(state_dim),
      error_dim_(error_dim),
      kind_(kind),
      U_(std::move(U)),
      T_u_(T_u) {
  if (state_dim_ == 0 || error_dim_ == 0)
    throw std::invalid_argument("law dimensions must be >= 1");
  if (U_.size() == 0) throw std::invalid_argument("law needs >= 1 component");
  if (U_.variables() != law_layout(state_dim_, error_dim_))
    throw std::invalid_argument("U must be declared over {x:n, e:q, T:1}");
  if (!(T_u_ > 0.0)) throw std::invalid_argument("T_u must be positive");
}

void ControlLaw::eval(const double* x, const double* e, double T,
                      double* out) const {
  const EvalView views[3] = {{x, state_dim_}, {e, error_dim_}, {&T, 1}};
  U_.evaluate(views, 3, out);
}

Vec ControlLaw::eval(const Vec& x, const Vec& e, double T) const {
  Vec out(U_.size());
  eval(x.data(), e.data(), T, out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Exact flow oracle: Dormand-Prince 4(5) with PI step control
// ---------------------------------------------------------------------------

void FlowOracleConfig::validate(double T) const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
    throw std::invalid_argument("oracle tolerances must be positive");
  if (!(min_step > 0.0) || !(norm_ceiling > 0.0) || max_steps == 0)
    throw std::invalid_argument("oracle guards must be positive");
  if (!(T > min_step))
    throw std::invalid_argument("requested time must exceed min_step");
}

namespace {

// Dormand-Prince 5(4) coefficients; the last stage row doubles as the 5th
// order weights (first-same-as-last).
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187,
                 A53 = 64448.0 / 6561, A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33,
                 A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192,
                 B5 = -2187.0 / 6784, B6 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920,
                 E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40;

struct Stepper {
  const ContinuousSystem& sys;
  const Vec& u;
  std::size_t n;
  Vec k1, k2, k3, k4, k5, k6, k7, ytmp, ynew, yerr;

  Stepper(const ContinuousSystem& s, const Vec& uu)
      : sys(s), u(uu), n(s.state_dim()) {
    for (Vec* v : {&k1, &k2, &k3, &k4, &k5, &k6, &k7, &ytmp, &ynew, &yerr})
      v->assign(n, 0.0);
  }

  void f(const Vec& y, Vec& out) { sys.eval_f(y.data(), u.data(), out.data()); }

  /// One trial step of size h from y (k1 = f(y) already filled). Returns the
  /// scaled error norm; ynew holds the 5th-order result.
  double attempt(const Vec& y, double h, double atol, double rtol) {
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * A21 * k1[i];
    f(ytmp, k2);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    f(ytmp, k3);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    f(ytmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] +
                h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    f(ytmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] +
                            A64 * k4[i] + A65 * k5[i]);
    f(ytmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] +
                            B5 * k5[i] + B6 * k6[i]);
    f(ynew, k7);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] +
                            E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
      const double sk =
          atol + rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
      const double q = e / sk;
      err += q * q;
    }
    err = std::sqrt(err / static_cast<double>(n));
    if (!std::isfinite(err)) err = 1e10;  // force rejection on overflow
    return err;
  }
};

double initial_step(Stepper& st, const Vec& y, double T, double atol,
                    double rtol) {
  double d0 = 0.0, d1 = 0.0;
  for (std::size_t i = 0; i < st.n; ++i) {
    const double sk = atol + rtol * std::fabs(y[i]);
    const double q0 = y[i] / sk, q1 = st.k1[i] / sk;
    d0 += q0 * q0;
    d1 += q1 * q1;
  }
  d0 = std::sqrt(d0 / static_cast<double>(st.n));
  d1 = std::sqrt(d1 / static_cast<double>(st.n));
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  if (!std::isfinite(h) || h <= 0.0) h = 1e-6;
  return std::min(h, T);
}

}  // namespace

FlowResult integrate_flow(const ContinuousSystem& sys, const Vec& x,
                          const Vec& u, double T, const FlowOracleConfig& cfg) {
  cfg.validate(T);
  if (x.size() != sys.state_dim() || u.size() != sys.input_dim())
    throw std::invalid_argument("state/input dimension mismatch");

  FlowResult res;
  res.state = x;
  res.time = 0.0;

  if (!all_finite(x) || norm2(x) > cfg.norm_ceiling) {
    res.status = FlowStatus::Escaped;
    return res;
  }

  Stepper st(sys, u);
  Vec y = x;
  st.f(y, st.k1);
  double h = initial_step(st, y, T, cfg.abs_tol, cfg.rel_tol);
  double t = 0.0;

  // PI controller constants (order-5 error estimate).
  constexpr double kBeta = 0.04, kExpo = 0.2 - 0.75 * kBeta;
  constexpr double kSafe = 0.9, kFacMin = 0.2, kFacMax = 10.0;
  double facold = 1e-4;

  while (t < T) {
    if (res.steps >= cfg.max_steps) {
      res.state = y;
      res.time = t;
      res.status = FlowStatus::OutOfSteps;
      return res;
    }
    if (h < cfg.min_step) {
      res.state = y;
      res.time = t;
      res.status = FlowStatus::Escaped;
      return res;
    }
    bool last = false;
    if (t + h >= T) {
      h = T - t;
      last = true;
    }

    const double err = st.attempt(y, h, cfg.abs_tol, cfg.rel_tol);
    ++res.steps;
    const double fac11 = std::pow(err, kExpo);
    if (err <= 1.0) {
      // Accept.
      t = last ? T : t + h;
      y = st.ynew;
      std::swap(st.k1, st.k7);  // first-same-as-last
      if (!all_finite(y) || norm2(y) > cfg.norm_ceiling) {
        res.state = y;
        res.time = t;
        res.status = FlowStatus::Escaped;
        return res;
      }
      facold = std::max(err, 1e-4);
      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::max(1.0 / kFacMax, std::min(1.0 / kFacMin, fac / kSafe));
      h = h / fac;
    } else {
      // Reject and shrink; FSAL stage is invalid after rejection, k1 is
      // still f(y) so nothing to restore.
      h = h / std::min(1.0 / kFacMin, fac11 / kSafe);
    }
  }

  res.state = y;
  res.time = T;
  res.status = FlowStatus::Reached;
  return res;
}

Vec exact_step(const ContinuousSystem& sys, const Vec& x, const Vec& u,
               double T, const FlowOracleConfig& cfg) {
  FlowResult r = integrate_flow(sys, x, u, T, cfg);
  switch (r.status) {
    case FlowStatus::Reached:
      return std::move(r.state);
    case FlowStatus::Escaped:
      throw FiniteEscape("flow escaped before t = " + std::to_string(T) +
                             " (reached t = " + std::to_string(r.time) + ")",
                         r.time);
    default:
      throw MaxStepsExceeded("flow did not reach t = " + std::to_string(T) +
                             " within the step budget");
  }
}

// ---------------------------------------------------------------------------
// Deterministic sup estimation
// ---------------------------------------------------------------------------

namespace {

/// Scales a unit-cube point into the centered ball of the given radius by
/// radial clamping; extremes are added separately by the callers.
void cube_to_ball(const double* unit, std::size_t n, double radius,
                  double* out) {
  double nrm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 2.0 * unit[i] - 1.0;
    nrm += out[i] * out[i];
  }
  nrm = std::sqrt(nrm);
  const double scale = nrm > 1.0 ? radius / nrm : radius;
  for (std::size_t i = 0; i < n; ++i) out[i] *= scale;
}

/// Axis points and radius-normalized corner points of the ball; the extremes
/// of smooth monotone fields live there.
std::vector<Vec> ball_extremes(std::size_t n, double radius) {
  std::vector<Vec> pts;
  pts.emplace_back(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Vec p(n, 0.0);
    p[i] = radius;
    pts.push_back(p);
    p[i] = -radius;
    pts.push_back(p);
  }
  if (n >= 2 && n <= 10) {
    const std::size_t corners = std::size_t{1} << n;
    const double comp = radius / std::sqrt(static_cast<double>(n));
    for (std::size_t mask = 0; mask < corners; ++mask) {
      Vec p(n);
      for (std::size_t i = 0; i < n; ++i)
        p[i] = (mask >> i) & 1u ? comp : -comp;
      pts.push_back(p);
    }
  }
  return pts;
}

}  // namespace

double estimate_input_sup(const ContinuousSystem& sys, const ControlLaw& law,
                          double M, double E, double T_cap,
                          std::size_t samples) {
  if (!(T_cap > 0.0)) throw std::invalid_argument("T_cap must be positive");
  const std::size_t n = sys.state_dim(), q = law.error_dim();
  const std::size_t m = law.input_dim();
  LowDiscrepancy seq(n + q + 1);
  Vec unit(n + q + 1), x(n), e(q), uv(m);
  double best = 0.0;

  const auto probe = [&](const Vec& xs, const Vec& es, double T) {
    law.eval(xs.data(), es.data(), T, uv.data());
    if (!all_finite(uv)) return;
    best = std::max(best, norm2(uv));
  };

  for (std::size_t i = 0; i < samples; ++i) {
    seq.point(i, unit.data());
    cube_to_ball(unit.data(), n, M, x.data());
    cube_to_ball(unit.data() + n, q, E, e.data());
    const double T = T_cap * std::max(unit[n + q], 1e-9);
    probe(x, e, T);
  }
  const double t_probe[3] = {T_cap, 0.5 * T_cap, std::min(1e-6, 0.5 * T_cap)};
  for (const Vec& xs : ball_extremes(n, M))
    for (const Vec& es : ball_extremes(q, E))
      for (double T : t_probe) probe(xs, es, T);

  return 1.1 * best;
}

double estimate_field_sup(const ContinuousSystem& sys, double state_radius,
                          double input_radius, std::size_t samples) {
  const std::size_t n = sys.state_dim(), m = sys.input_dim();
  LowDiscrepancy seq(n + m);
  Vec unit(n + m), x(n), u(m), fx(n);
  double best = 0.0;

  const auto probe = [&](const Vec& xs, const Vec& us) {
    sys.eval_f(xs.data(), us.data(), fx.data());
    if (!all_finite(fx)) return;
    best = std::max(best, norm2(fx));
  };

  for (std::size_t i = 0; i < samples; ++i) {
    seq.point(i, unit.data());
    cube_to_ball(unit.data(), n, state_radius, x.data());
    cube_to_ball(unit.data() + n, m, input_radius, u.data());
    probe(x, u);
  }
  for (const Vec& xs : ball_extremes(n, state_radius))
    for (const Vec& us : ball_extremes(m, input_radius)) probe(xs, us);

  return 1.1 * best;
}

SupBounds estimate_sup_bounds(const ContinuousSystem& sys,
                              const ControlLaw& law, double M, double E,
                              double T_cap, std::size_t samples) {
  SupBounds b;
  b.C_u = estimate_input_sup(sys, law, M, E, T_cap, samples);
  b.C_f = estimate_field_sup(sys, 2.0 * M, b.C_u, samples);
  return b;
}

}  // namespace sdstab
