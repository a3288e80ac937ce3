#pragma once

// ============================================================================
// A fully worked scalar benchmark: the open-loop plant dx/dt = x^3 + u
// (which has finite escape times), a desired stable drift
// f_d(x) = -x^3 - 2x, and the matched controller that makes the Euler
// closed-loop step land exactly on the Heun step of f_d. The reproduction
// entry point simulates Euler and exact-flow closed loops with and without
// measurement error on a shared random schedule and writes CSV, dense
// intersample CSV and an SVG overlay.
// ============================================================================

#include <cstdint>
#include <string>
#include <vector>

#include "sdstab/closedloop.hpp"

namespace sdstab {

/// The scalar plant dx/dt = x^3 + u.
ContinuousSystem example_system();

/// Desired drift f_d(x) = -x^3 - 2x as a one-component system (the input
/// is accepted and ignored so the type fits ContinuousSystem).
ContinuousSystem example_target_field();

/// Heun step of the desired drift as a map over the layout {x:1, T:1}:
///   F(x, T) = x + (T/2) (f_d(x) + f_d(x + T f_d(x))).
Expression example_target_map();

/// Controller matched to the target map through the plant: with e = 0 one
/// Euler step of the closed loop from x equals F(x, T) exactly. Under
/// measurement error the law evaluates at x + e.
ControlLaw example_matched_law(ErrorKind kind = ErrorKind::StateMeasurement);

/// Euler closed loop of the plant under the matched controller.
ClosedLoopModel example_euler_model(
    ErrorKind kind = ErrorKind::StateMeasurement);

/// Exact-flow closed loop of the plant under the matched controller.
ClosedLoopModel example_exact_model(
    ErrorKind kind = ErrorKind::StateMeasurement,
    const FlowOracleConfig& oracle = {});

/// Heun discretization of the autonomous target field under a zero
/// controller; its step reproduces example_target_map.
ClosedLoopModel example_reference_model();

/// What reproduce_example produced, with the quantities the bound
/// assertions need.
struct ExampleArtifacts {
  std::vector<std::string> files;    ///< paths written, in emission order
  std::size_t steps = 0;             ///< samples in the shared schedule
  double t_max = 0.0;                ///< period cap of the schedule
  double horizon = 0.0;              ///< elapsed time covered
  std::uint64_t seed = 0;
  double euler_clean_at_6 = 0.0;     ///< |x_k| at the first sample >= t=6
  double exact_clean_at_6 = 0.0;
  double euler_noisy_limsup = 0.0;   ///< max |x_k| over the second half
  double exact_noisy_limsup = 0.0;
  double worst_stem_gap = 0.0;       ///< max_k |x^Euler_k - x^exact_k|, clean
};

/// Runs the benchmark from x(0) = 5: Euler and exact closed loops on one
/// random schedule with periods below T_max, each with e = 0 and with
/// per-sample errors uniform in [-1, 1]; writes four trajectory CSVs, dense
/// intersample CSVs for the exact runs (16 points per interval) and, when
/// `plot` is set, an SVG overlaying the dense curves with stems at the
/// sampling instants. All randomness derives from `seed`; identical calls
/// produce byte-identical files.
ExampleArtifacts reproduce_example(const std::string& out_dir,
                                   std::uint64_t seed, double T_max = 0.02,
                                   double horizon = 8.0, bool plot = true);

}  // namespace sdstab
