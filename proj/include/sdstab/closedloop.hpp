#pragma once

// ============================================================================
// Discrete-time closed-loop models of a sampled-data system: the plant under
// zero-order hold composed with a sampled control law,
//   x_{k+1} = F(x_k, U(x_k, e_k, T_k), T_k),
// where F is either the exact flow (oracle-backed) or an explicit
// Runge-Kutta one-step map, and e_k is the per-sample disturbance.
// ============================================================================

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "sdstab/rk.hpp"
#include "sdstab/systems.hpp"
#include "sdstab/vecmath.hpp"

namespace sdstab {

enum class Backend { ExactOracle, RungeKutta };

class ClosedLoopModel {
 public:
  static ClosedLoopModel with_exact_flow(ContinuousSystem sys, ControlLaw law,
                                         FlowOracleConfig oracle = {});
  static ClosedLoopModel with_tableau(ContinuousSystem sys, ControlLaw law,
                                      ButcherTableau tableau);

  [[nodiscard]] Backend backend() const { return backend_; }
  [[nodiscard]] const ContinuousSystem& system() const { return sys_; }
  [[nodiscard]] const ControlLaw& law() const { return law_; }
  [[nodiscard]] const ButcherTableau& tableau() const { return tableau_; }
  [[nodiscard]] const FlowOracleConfig& oracle() const { return oracle_; }
  [[nodiscard]] std::size_t state_dim() const { return sys_.state_dim(); }
  [[nodiscard]] std::size_t error_dim() const { return law_.error_dim(); }

  /// u_k = U(x, e, T).
  [[nodiscard]] Vec control(const Vec& x, const Vec& e, double T) const;

  struct Step {
    Vec x;        ///< next state (unspecified when escaped)
    Vec u;        ///< applied input
    bool escaped = false;
  };

  /// One closed-loop step with escape reported as data. T must lie in
  /// (0, law.T_u].
  [[nodiscard]] Step step_checked(const Vec& x, const Vec& e, double T) const;

  /// One closed-loop step; throws FiniteEscape.
  [[nodiscard]] Vec step(const Vec& x, const Vec& e, double T) const;

  /// Closed-loop vector field f(x, U(x,e,T)); the object whose Lipschitz
  /// constant enters the consistency bounds.
  [[nodiscard]] Vec field(const Vec& x, const Vec& e, double T) const;

 private:
  ClosedLoopModel(ContinuousSystem sys, ControlLaw law, Backend backend,
                  ButcherTableau tableau, FlowOracleConfig oracle);

  ContinuousSystem sys_;
  ControlLaw law_;
  Backend backend_;
  ButcherTableau tableau_;
  FlowOracleConfig oracle_;
};

/// Finite list of sampling periods T_0 .. T_{K-1}, all strictly positive.
struct SamplingSchedule {
  std::vector<double> periods;

  static SamplingSchedule fixed(std::vector<double> periods);
  /// count draws uniform on the open interval (0, T_max).
  static SamplingSchedule uniform_random(double T_max, std::size_t count,
                                         std::uint64_t seed);
  /// Draws uniform on (0, T_max) until the elapsed time reaches `horizon`.
  static SamplingSchedule until_elapsed(double T_max, double horizon,
                                        std::uint64_t seed);

  [[nodiscard]] double total() const;
  [[nodiscard]] std::size_t count() const { return periods.size(); }
  [[nodiscard]] SamplingSchedule truncated(std::size_t k) const;
};

/// Per-sample disturbance e_k with random access by step index; random kinds
/// are counter-based, so e_k depends only on (seed, k) and truncating a
/// simulation cannot change earlier draws.
class DisturbanceSignal {
 public:
  static DisturbanceSignal zero(std::size_t dim);
  static DisturbanceSignal constant(Vec e);
  /// i.i.d. components uniform on [-amplitude, amplitude].
  static DisturbanceSignal uniform(std::size_t dim, double amplitude,
                                   std::uint64_t seed);

  [[nodiscard]] Vec at(std::size_t k) const;
  [[nodiscard]] std::size_t dim() const { return dim_; }
  /// sup over i in [0, count) of |e_i|; 0 for an empty range.
  [[nodiscard]] double sup_norm(std::size_t count) const;

 private:
  enum class Kind { Zero, Constant, Uniform };
  Kind kind_ = Kind::Zero;
  std::size_t dim_ = 0;
  Vec constant_;
  double amplitude_ = 0.0;
  std::uint64_t seed_ = 0;
};

enum class TrajectoryStatus { Complete, Escaped };

/// Sampled closed-loop run. states/times have one more entry than the
/// per-step arrays; when status is Escaped the trajectory ends at the last
/// state from which the next step left the admissible region.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<double> periods;
  std::vector<Vec> errors;
  std::vector<Vec> inputs;
  TrajectoryStatus status = TrajectoryStatus::Complete;

  [[nodiscard]] std::size_t steps() const { return periods.size(); }

  /// Columns: k, t, T_k, x_*, e_*, u_*, status. The terminal row carries the
  /// final state with zero-filled step fields and the trajectory status;
  /// earlier rows carry status "ok".
  void write_csv(std::ostream& out) const;
};

Trajectory simulate(const ClosedLoopModel& model, const Vec& x0,
                    const SamplingSchedule& schedule,
                    const DisturbanceSignal& disturbance);

/// Synthesizes the sampled law that makes the Euler closed loop reproduce a
/// target one-step map F_d(x, T) exactly:
///   U(z, T) = (F_d(z, T) - z)/T - g(z),  g(x) = f(x, 0),
/// with z = x + e for state-measurement errors, or z = x and the disturbance
/// added to the computed input for actuation errors. Requires the plant to
/// be control-affine with identity input channel, f(x,u) = g(x) + u, which
/// is verified on a sampled residual (NotControlAffine otherwise).
/// `target` must be a vector expression over {x:n, T:1}.
ControlLaw match_controller(const ContinuousSystem& sys,
                            const VectorExpression& target, ErrorKind kind,
                            double T_u = 1.0);

}  // namespace sdstab
