#pragma once

// ============================================================================
// Continuous-time control systems x' = f(x, u), sampled-data control laws,
// and the reference flow oracle that realizes the exact discrete-time step
// under zero-order hold to integrator accuracy.
// ============================================================================

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "sdstab/errors.hpp"
#include "sdstab/expr.hpp"
#include "sdstab/vecmath.hpp"

namespace sdstab {

/// x' = f(x, u) with f a vector expression over the layout {x:n, u:m}.
class ContinuousSystem {
 public:
  ContinuousSystem() = default;
  ContinuousSystem(std::size_t state_dim, std::size_t input_dim,
                   VectorExpression f);

  /// The layout every system field must use.
  static VariableLayout field_layout(std::size_t state_dim,
                                     std::size_t input_dim);

  [[nodiscard]] std::size_t state_dim() const { return state_dim_; }
  [[nodiscard]] std::size_t input_dim() const { return input_dim_; }
  [[nodiscard]] const VectorExpression& f() const { return f_; }

  void eval_f(const double* x, const double* u, double* out) const;
  [[nodiscard]] Vec eval_f(const Vec& x, const Vec& u) const;

 private:
  std::size_t state_dim_ = 0, input_dim_ = 0;
  VectorExpression f_;
};

enum class ErrorKind { StateMeasurement, Actuation };

/// u_k = U(x_k, e_k, T_k), a vector expression over {x:n, e:q, T:1}.
/// For state-measurement errors q equals the state dimension and the
/// disturbance enters the law as x+e; for actuation errors q equals the
/// input dimension and the disturbance is added to the computed input. Both
/// shapes are baked into the expression when the law is synthesized; freely
/// authored laws may use e however they like.
class ControlLaw {
 public:
  ControlLaw() = default;
  ControlLaw(std::size_t state_dim, std::size_t error_dim, ErrorKind kind,
             VectorExpression U, double T_u = 1.0);

  static VariableLayout law_layout(std::size_t state_dim,
                                   std::size_t error_dim);

  [[nodiscard]] std::size_t state_dim() const { return state_dim_; }
  [[nodiscard]] std::size_t error_dim() const { return error_dim_; }
  [[nodiscard]] std::size_t input_dim() const { return U_.size(); }
  [[nodiscard]] ErrorKind kind() const { return kind_; }
  [[nodiscard]] const VectorExpression& U() const { return U_; }

  /// Largest period the law is declared valid for.
  [[nodiscard]] double T_u() const { return T_u_; }

  void eval(const double* x, const double* e, double T, double* out) const;
  [[nodiscard]] Vec eval(const Vec& x, const Vec& e, double T) const;

 private:
  std::size_t state_dim_ = 0, error_dim_ = 0;
  ErrorKind kind_ = ErrorKind::StateMeasurement;
  VectorExpression U_;
  double T_u_ = 1.0;
};

/// Tolerances and guards of the exact-flow oracle.
struct FlowOracleConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  std::size_t max_steps = 1000000;
  double min_step = 1e-14;
  double norm_ceiling = 1e8;

  void validate(double T) const;
};

enum class FlowStatus {
  Reached,     ///< integrated to the requested time
  Escaped,     ///< norm ceiling crossed or step size underflowed
  OutOfSteps,  ///< step budget exhausted
};

struct FlowResult {
  Vec state;          ///< state at `time`
  FlowStatus status = FlowStatus::Reached;
  double time = 0.0;  ///< time actually reached
  std::size_t steps = 0;
};

/// Integrates x' = f(x, u) with u held constant over [0, T] using an
/// embedded Dormand-Prince 4(5) pair with PI step-size control. Escape is a
/// reported outcome, never an uncaught failure.
FlowResult integrate_flow(const ContinuousSystem& sys, const Vec& x,
                          const Vec& u, double T,
                          const FlowOracleConfig& cfg = {});

/// The exact one-step map under zero-order hold. Throws FiniteEscape or
/// MaxStepsExceeded instead of returning a partial state.
Vec exact_step(const ContinuousSystem& sys, const Vec& x, const Vec& u,
               double T, const FlowOracleConfig& cfg = {});

/// Deterministic estimate of sup |U(x,e,T)| over the ball |x| <= M, the ball
/// |e| <= E and T in (0, T_cap], from a low-discrepancy sample augmented
/// with axis and corner extremes, inflated by the 1.1 safety factor.
double estimate_input_sup(const ContinuousSystem& sys, const ControlLaw& law,
                          double M, double E, double T_cap,
                          std::size_t samples = 2048);

/// Same scheme for sup |f(x,u)| over |x| <= state_radius, |u| <= input_radius.
double estimate_field_sup(const ContinuousSystem& sys, double state_radius,
                          double input_radius, std::size_t samples = 2048);

struct SupBounds {
  double C_f = 0.0;  ///< field bound over the doubled state ball
  double C_u = 0.0;  ///< input bound
};

/// Composes the two estimates with the doubled state radius used by the
/// intersample bound: C_u over (M, E, T_cap), then C_f over |x| <= 2M,
/// |u| <= C_u.
SupBounds estimate_sup_bounds(const ContinuousSystem& sys,
                              const ControlLaw& law, double M, double E,
                              double T_cap, std::size_t samples = 2048);

}  // namespace sdstab
