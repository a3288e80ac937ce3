#include "sdstab/closedloop.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <utility>

#include "sdstab/errors.hpp"
#include "sdstab/format.hpp"
#include "sdstab/rng.hpp"

namespace sdstab {

namespace {

// Stream tags keep schedule draws, disturbance draws and fitting probes
// decorrelated even when a caller reuses one seed everywhere.
constexpr std::uint64_t kScheduleStream = 0x5A3C17D2ull;
constexpr std::uint64_t kDisturbanceStream = 0xD57B90E1ull;

}  // namespace

// ============================================================================
// ClosedLoopModel
// ============================================================================

ClosedLoopModel::ClosedLoopModel(ContinuousSystem sys, ControlLaw law,
                                 Backend backend, ButcherTableau tableau,
                                 FlowOracleConfig oracle)
    : sys_(std::move(sys)),
      law_(std::move(law)),
      backend_(backend),
      tableau_(std::move(tableau)),
      oracle_(oracle) {
  if (law_.state_dim() != sys_.state_dim())
    throw ConfigError("control law state dimension " +
                      std::to_string(law_.state_dim()) +
                      " does not match the plant state dimension " +
                      std::to_string(sys_.state_dim()));
  if (law_.input_dim() != sys_.input_dim())
    throw ConfigError("control law produces " +
                      std::to_string(law_.input_dim()) +
                      " input components but the plant takes " +
                      std::to_string(sys_.input_dim()));
}

ClosedLoopModel ClosedLoopModel::with_exact_flow(ContinuousSystem sys,
                                                 ControlLaw law,
                                                 FlowOracleConfig oracle) {
  return ClosedLoopModel(std::move(sys), std::move(law), Backend::ExactOracle,
                         ButcherTableau::builtin("euler"), oracle);
}

ClosedLoopModel ClosedLoopModel::with_tableau(ContinuousSystem sys,
                                              ControlLaw law,
                                              ButcherTableau tableau) {
  tableau.validate();
  return ClosedLoopModel(std::move(sys), std::move(law), Backend::RungeKutta,
                         std::move(tableau), FlowOracleConfig{});
}

Vec ClosedLoopModel::control(const Vec& x, const Vec& e, double T) const {
  if (!(T > 0.0) || !(T <= law_.T_u()))
    throw ConfigError("sampling period " + format_double(T) +
                      " outside the law's declared validity (0, " +
                      format_double(law_.T_u()) + "]");
  return law_.eval(x, e, T);
}

ClosedLoopModel::Step ClosedLoopModel::step_checked(const Vec& x, const Vec& e,
                                                    double T) const {
  Vec u = control(x, e, T);
  if (backend_ == Backend::ExactOracle) {
    oracle_.validate(T);
    FlowResult r = integrate_flow(sys_, x, u, T, oracle_);
    if (r.status == FlowStatus::OutOfSteps)
      throw MaxStepsExceeded("flow oracle exhausted " +
                             std::to_string(oracle_.max_steps) +
                             " steps before t = " + format_double(T));
    return Step{std::move(r.state), std::move(u),
                r.status == FlowStatus::Escaped};
  }
  Vec y = rk_step(sys_, tableau_, x, u, T);
  const bool escaped = !all_finite(y) || norm2(y) > oracle_.norm_ceiling;
  return Step{std::move(y), std::move(u), escaped};
}

Vec ClosedLoopModel::step(const Vec& x, const Vec& e, double T) const {
  Step s = step_checked(x, e, T);
  if (s.escaped) {
    if (backend_ == Backend::ExactOracle)
      throw FiniteEscape("closed-loop flow escaped before t = " +
                             format_double(T),
                         T);
    throw FiniteEscape("runge-kutta step left the admissible region", 0.0);
  }
  return std::move(s.x);
}

Vec ClosedLoopModel::field(const Vec& x, const Vec& e, double T) const {
  return sys_.eval_f(x, control(x, e, T));
}

// ============================================================================
// SamplingSchedule
// ============================================================================

SamplingSchedule SamplingSchedule::fixed(std::vector<double> periods) {
  for (double T : periods)
    if (!std::isfinite(T) || T <= 0.0)
      throw ConfigError("sampling periods must be finite and positive, got " +
                        format_double(T));
  return SamplingSchedule{std::move(periods)};
}

SamplingSchedule SamplingSchedule::uniform_random(double T_max,
                                                  std::size_t count,
                                                  std::uint64_t seed) {
  if (!std::isfinite(T_max) || T_max <= 0.0)
    throw ConfigError("T_max must be finite and positive");
  Rng rng(seed, kScheduleStream);
  SamplingSchedule s;
  s.periods.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    s.periods.push_back(T_max * rng.next_open_unit());
  return s;
}

SamplingSchedule SamplingSchedule::until_elapsed(double T_max, double horizon,
                                                 std::uint64_t seed) {
  if (!std::isfinite(T_max) || T_max <= 0.0)
    throw ConfigError("T_max must be finite and positive");
  if (!std::isfinite(horizon) || horizon <= 0.0)
    throw ConfigError("horizon must be finite and positive");
  Rng rng(seed, kScheduleStream);
  SamplingSchedule s;
  double elapsed = 0.0;
  while (elapsed < horizon) {
    if (s.periods.size() >= 100000000)
      throw ConfigError("horizon needs more than 1e8 sampling periods");
    const double T = T_max * rng.next_open_unit();
    s.periods.push_back(T);
    elapsed += T;
  }
  return s;
}

double SamplingSchedule::total() const {
  double t = 0.0;
  for (double T : periods) t += T;
  return t;
}

SamplingSchedule SamplingSchedule::truncated(std::size_t k) const {
  SamplingSchedule s;
  s.periods.assign(periods.begin(),
                   periods.begin() +
                       static_cast<std::ptrdiff_t>(std::min(k, periods.size())));
  return s;
}

// ============================================================================
// DisturbanceSignal
// ============================================================================

DisturbanceSignal DisturbanceSignal::zero(std::size_t dim) {
  DisturbanceSignal d;
  d.kind_ = Kind::Zero;
  d.dim_ = dim;
  return d;
}

DisturbanceSignal DisturbanceSignal::constant(Vec e) {
  if (!all_finite(e))
    throw ConfigError("constant disturbance has non-finite components");
  DisturbanceSignal d;
  d.kind_ = Kind::Constant;
  d.dim_ = e.size();
  d.constant_ = std::move(e);
  return d;
}

DisturbanceSignal DisturbanceSignal::uniform(std::size_t dim, double amplitude,
                                             std::uint64_t seed) {
  if (!std::isfinite(amplitude) || amplitude < 0.0)
    throw ConfigError("disturbance amplitude must be finite and nonnegative");
  DisturbanceSignal d;
  d.kind_ = Kind::Uniform;
  d.dim_ = dim;
  d.amplitude_ = amplitude;
  d.seed_ = seed;
  return d;
}

Vec DisturbanceSignal::at(std::size_t k) const {
  switch (kind_) {
    case Kind::Zero:
      return Vec(dim_, 0.0);
    case Kind::Constant:
      return constant_;
    case Kind::Uniform:
      break;
  }
  // Counter-based access: e_k is a pure function of (seed, k), so reading
  // step k never depends on which other steps were read, or in what order.
  Rng rk = Rng(seed_, kDisturbanceStream).split(k);
  Vec e(dim_);
  for (std::size_t c = 0; c < dim_; ++c)
    e[c] = rk.uniform(-amplitude_, amplitude_);
  return e;
}

double DisturbanceSignal::sup_norm(std::size_t count) const {
  if (count == 0) return 0.0;
  switch (kind_) {
    case Kind::Zero:
      return 0.0;
    case Kind::Constant:
      return norm2(constant_);
    case Kind::Uniform:
      break;
  }
  double sup = 0.0;
  for (std::size_t k = 0; k < count; ++k)
    sup = std::max(sup, norm2(at(k)));
  return sup;
}

// ============================================================================
// Trajectory
// ============================================================================

void Trajectory::write_csv(std::ostream& out) const {
  const std::size_t n = states.empty() ? 0 : states.front().size();
  const std::size_t q = errors.empty() ? 0 : errors.front().size();
  const std::size_t m = inputs.empty() ? 0 : inputs.front().size();

  out << "k,t,T";
  for (std::size_t i = 0; i < n; ++i) out << ",x" << i;
  for (std::size_t i = 0; i < q; ++i) out << ",e" << i;
  for (std::size_t i = 0; i < m; ++i) out << ",u" << i;
  out << ",status\n";

  auto row = [&](std::size_t k, double T, const Vec& x, const Vec* e,
                 const Vec* u, const char* status) {
    out << k << ',' << format_double(times[k]) << ',' << format_double(T);
    for (std::size_t i = 0; i < n; ++i) out << ',' << format_double(x[i]);
    for (std::size_t i = 0; i < q; ++i)
      out << ',' << format_double(e ? (*e)[i] : 0.0);
    for (std::size_t i = 0; i < m; ++i)
      out << ',' << format_double(u ? (*u)[i] : 0.0);
    out << ',' << status << '\n';
  };

  for (std::size_t k = 0; k < steps(); ++k)
    row(k, periods[k], states[k], &errors[k], &inputs[k], "ok");
  if (!states.empty())
    row(steps(), 0.0, states.back(), nullptr, nullptr,
        status == TrajectoryStatus::Complete ? "complete" : "escaped");
}

// ============================================================================
// Simulation
// ============================================================================

Trajectory simulate(const ClosedLoopModel& model, const Vec& x0,
                    const SamplingSchedule& schedule,
                    const DisturbanceSignal& disturbance) {
  if (x0.size() != model.state_dim())
    throw ConfigError("initial state has " + std::to_string(x0.size()) +
                      " components, the plant has " +
                      std::to_string(model.state_dim()));
  if (disturbance.dim() != model.error_dim())
    throw ConfigError("disturbance dimension " +
                      std::to_string(disturbance.dim()) +
                      " does not match the law's error dimension " +
                      std::to_string(model.error_dim()));

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < schedule.count(); ++k) {
    const double T = schedule.periods[k];
    Vec e = disturbance.at(k);
    ClosedLoopModel::Step s = model.step_checked(traj.states.back(), e, T);
    if (s.escaped) {
      // The attempted step is not recorded; the trajectory ends at the last
      // state that was still inside the admissible region.
      traj.status = TrajectoryStatus::Escaped;
      return traj;
    }
    traj.periods.push_back(T);
    traj.errors.push_back(std::move(e));
    traj.inputs.push_back(std::move(s.u));
    traj.times.push_back(traj.times.back() + T);
    traj.states.push_back(std::move(s.x));
  }
  return traj;
}

// ============================================================================
// Controller matching
// ============================================================================

namespace {

/// Verifies f(x,u) = f(x,0) + u on a deterministic sample; a plant of this
/// shape lets the target map be realized exactly by one Euler step.
void require_identity_input_channel(const ContinuousSystem& sys) {
  const std::size_t n = sys.state_dim(), m = sys.input_dim();
  if (m != n)
    throw NotControlAffine(
        "controller matching needs f(x,u) = g(x) + u, so the input dimension "
        "must equal the state dimension (" +
        std::to_string(m) + " vs " + std::to_string(n) + ")");

  LowDiscrepancy seq(n + m);
  std::vector<double> pt(n + m);
  Vec x(n), u(m), zero(m, 0.0);
  std::size_t evaluated = 0;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 64; ++i) {
    seq.point(i, pt.data());
    for (std::size_t j = 0; j < n; ++j) x[j] = 4.0 * pt[j] - 2.0;
    for (std::size_t j = 0; j < m; ++j) u[j] = 4.0 * pt[n + j] - 2.0;
    Vec fu, f0;
    try {
      fu = sys.eval_f(x, u);
      f0 = sys.eval_f(x, zero);
    } catch (const DomainError&) {
      continue;  // point outside the field's domain; probe elsewhere
    }
    ++evaluated;
    for (std::size_t c = 0; c < n; ++c)
      worst = std::max(worst, std::fabs(fu[c] - f0[c] - u[c]));
  }
  if (evaluated == 0)
    throw NotControlAffine(
        "could not evaluate the field anywhere on the probe box [-2,2]");
  if (worst > 1e-9)
    throw NotControlAffine(
        "field is not of the form g(x) + u: worst residual "
        "|f(x,u) - f(x,0) - u| = " +
        format_double(worst) + " over " + std::to_string(evaluated) +
        " probe points");
}

}  // namespace

ControlLaw match_controller(const ContinuousSystem& sys,
                            const VectorExpression& target, ErrorKind kind,
                            double T_u) {
  const std::size_t n = sys.state_dim();
  const VariableLayout target_layout{{"x", n}, {"T", 1}};
  if (target.variables() != target_layout)
    throw ConfigError("target map must be declared over {x:" +
                      std::to_string(n) + ", T:1}");
  if (target.size() != n)
    throw ConfigError("target map has " + std::to_string(target.size()) +
                      " components, the plant state has " +
                      std::to_string(n));
  require_identity_input_channel(sys);

  const std::size_t q = n;  // both error kinds share the state dimension here
  const VariableLayout law_layout = ControlLaw::law_layout(n, q);
  const Expression T_var = Expression::variable(law_layout, "T");

  // z is what the law can see: the disturbed state for state-measurement
  // errors, the true state when the disturbance enters at the actuator.
  std::vector<Expression> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = Expression::variable(law_layout, "x", i);
    if (kind == ErrorKind::StateMeasurement)
      z[i] = z[i] + Expression::variable(law_layout, "e", i);
  }

  // Rebase the target map F(x,T) and the drift g(x) = f(x,0) onto the law's
  // variables with x := z.
  std::vector<std::vector<Expression>> target_bindings(2);
  target_bindings[0] = z;
  target_bindings[1] = {T_var};

  std::vector<std::vector<Expression>> field_bindings(2);
  field_bindings[0] = z;
  field_bindings[1].assign(n, Expression::constant(law_layout, 0.0));

  std::vector<Expression> components;
  components.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Expression F_i =
        Expression::compose(target[i], law_layout, target_bindings);
    Expression g_i =
        Expression::compose(sys.f()[i], law_layout, field_bindings);
    Expression U_i = (F_i - z[i]) / T_var - g_i;
    if (kind == ErrorKind::Actuation)
      U_i = U_i + Expression::variable(law_layout, "e", i);
    components.push_back(std::move(U_i));
  }
  return ControlLaw(n, q, kind,
                    VectorExpression(law_layout, std::move(components)), T_u);
}

}  // namespace sdstab
