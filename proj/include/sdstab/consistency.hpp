#pragma once

// ============================================================================
// One-step and multistep consistency between two discrete-time models of the
// same sampled-data loop. A consistency certificate asserts the mismatch
// inequality
//   |F^a(x^a,e,T) - F^b(x^b,e,T)|
//     <= (1 + K T)|x^a - x^b| + T rho(T) (max{|x^a|,|x^b|} + phi(|e|))
// for states in the ball |x| <= M, errors |e| <= E and periods T in
// (0, T_star), with rho(T) = rho_c * T. Certificates are fitted from sampled
// trajectories and validated on fresh samples; they are empirical artifacts
// with recorded residual statistics, not proofs.
// ============================================================================

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sdstab/closedloop.hpp"
#include "sdstab/systems.hpp"
#include "sdstab/vecmath.hpp"

namespace sdstab {

/// Gain of the form s -> sum_i c_i s^(p_i) with c_i > 0 and p_i > 0, kept
/// sorted by exponent. The empty sum is the zero gain (used for
/// disturbance-free certificates); any nonempty sum is strictly increasing
/// and unbounded, so gains are closed under addition and positive scaling.
class GainFunction {
 public:
  GainFunction() = default;

  /// Single term c*s^p. Requires c >= 0 and p > 0; c = 0 gives the zero gain.
  static GainFunction power(double c, double p);

  [[nodiscard]] GainFunction plus(const GainFunction& o) const;
  [[nodiscard]] GainFunction scaled(double factor) const;

  /// Evaluates at s >= 0 (DomainError otherwise).
  double operator()(double s) const;

  [[nodiscard]] bool is_zero() const { return terms_.empty(); }
  [[nodiscard]] const std::vector<std::pair<double, double>>& terms() const {
    return terms_;
  }

  /// e.g. "3*s^5 + 0.5*s"; the zero gain prints as "0".
  [[nodiscard]] std::string print() const;

 private:
  std::vector<std::pair<double, double>> terms_;  // (coefficient, exponent)
};

/// Smallest one- or two-term GainFunction that lies on or above every sample
/// point (s_i, y_i), with exponents drawn from a fixed candidate set and the
/// value at s_ref minimized. Points with y_i <= floor are treated as zero;
/// if all are, the zero gain is returned.
GainFunction fit_gain_envelope(const std::vector<std::pair<double, double>>& pts,
                               double s_ref, double floor = 1e-12);

/// Residual statistics recorded with a fitted certificate.
struct FitReport {
  std::size_t samples = 0;             ///< fitting draws per stage
  std::size_t validation_samples = 0;  ///< fresh draws used to validate
  double max_violation = 0.0;  ///< worst lhs-rhs excess on validation (0 = clean)
  double worst_margin = 0.0;   ///< smallest rhs-lhs seen on validation
  std::size_t halvings = 0;    ///< times the period cap was halved
  double K_raw = 0.0;          ///< Lipschitz quotient before inflation
  double rho_raw = 0.0;        ///< mismatch envelope slope before inflation
  std::vector<std::pair<double, double>> rho_ls;  ///< per-period least-squares slopes
  std::uint64_t seed = 0;
  std::string method = "validated empirical";
};

struct ConsistencyCertificate {
  double K = 0.0;      ///< state-difference gain in the (1 + K T) factor
  double rho_c = 0.0;  ///< rho(T) = rho_c * T
  GainFunction phi;    ///< disturbance inflow gain
  double T_star = 0.0; ///< periods certified: T in (0, T_star)
  double M = 0.0;      ///< state ball radius the fit covered
  double E = 0.0;      ///< error ball radius the fit covered
  FitReport fit;

  [[nodiscard]] double rho(double T) const { return rho_c * T; }

  /// Largest T with rho(T) <= y (infinite when rho is identically zero).
  [[nodiscard]] double rho_inv(double y) const;

  /// Right-hand side of the mismatch inequality.
  [[nodiscard]] double mismatch_bound(double state_gap, double max_norm,
                                      double err_norm, double T) const;
};

/// One-step recursion bound from the certificate at its own (M, E):
///   alpha(delta, T) = (1 + K T) delta + T rho(T) (M + phi(E)),
/// nondecreasing in delta. Iterating from delta = 0 bounds the k-step
/// trajectory mismatch.
double repmc_alpha(const ConsistencyCertificate& cert, double delta, double T);

/// Largest period for which iterating alpha over any schedule with total
/// time <= horizon stays below eta * M + phi(E):
///   min{T_star, rho^{-1}(eta / (e^{K H} H)), rho^{-1}(1 / (e^{K H} H))}.
double multistep_period_bound(const ConsistencyCertificate& cert,
                              double horizon, double eta);

/// Axis-aligned box, used to describe sampling regions.
struct Box {
  Vec lo, hi;
};

/// Empirical one-step mismatch law between the exact flow and the Euler map
/// with the same held input: L_bar is the largest observed
/// |F^e - F^Euler| / (T^2 |f(x,u)|) (samples with |f| < 1e-12 are skipped),
/// and slope is the log-log growth rate of the per-period worst mismatch.
struct MismatchLaw {
  double L_bar = 0.0;
  double slope = 0.0;
  std::vector<std::pair<double, double>> per_T;  ///< (T, worst mismatch)
  std::size_t skipped = 0;  ///< escaped or near-equilibrium samples
};

MismatchLaw euler_mismatch_law(const ContinuousSystem& sys, const Box& states,
                               const Box& inputs,
                               const std::vector<double>& T_grid,
                               std::size_t samples_per_T = 256,
                               FlowOracleConfig oracle = {1e-13, 1e-12});

/// Fits a consistency certificate for the model pair on |x| <= M, |e| <= E:
/// K from closed-loop field difference quotients (inflated 10%), rho_c from
/// the error-free same-state mismatch envelope over log-spaced periods
/// (least-squares slopes kept as diagnostics), phi as the envelope over |e|
/// of the same-state mismatch residual above the state norm, then the full
/// inequality is validated on a fresh sample. Any escape or validation
/// failure halves the period cap and refits; below the 1e-4 floor
/// NoCertificate is thrown.
ConsistencyCertificate fit_repc(const ClosedLoopModel& model_a,
                                const ClosedLoopModel& model_b, double M,
                                double E, double T_cap,
                                std::size_t samples = 10000,
                                std::uint64_t seed = 1);

/// Fresh-sample spot check of a certificate against a model pair within its
/// own (M, E, T_star) region: returns the smallest observed margin
/// rhs - lhs of the mismatch inequality (negative when violated; escapes
/// count as violations with margin -inf).
double validate_repc(const ConsistencyCertificate& cert,
                     const ClosedLoopModel& model_a,
                     const ClosedLoopModel& model_b, std::size_t samples,
                     std::uint64_t seed);

/// Transitivity: certificates for (a,b) and (b,c) combine into one for
/// (a,c) with K = K_ab, rho_c and phi summed and T_star the minimum. The
/// combined inequality is revalidated on a fresh (a,c) sample; failure
/// (fitting looseness) raises NoCertificate. Requires matching (M, E).
ConsistencyCertificate compose_repc(const ConsistencyCertificate& cert_ab,
                                    const ConsistencyCertificate& cert_bc,
                                    const ClosedLoopModel& model_a,
                                    const ClosedLoopModel& model_c,
                                    std::size_t validation_samples = 4000,
                                    std::uint64_t seed = 2);

/// Result of the multistep mismatch search.
struct RepmcOutcome {
  double T_L = 0.0;           ///< largest passing period from the halving ladder
  double worst_margin = 0.0;  ///< smallest bound minus mismatch over all checks
  std::size_t trials = 0;
  std::size_t halvings = 0;
  std::uint64_t seed = 0;
};

/// Halving search for a period T_L such that `trials` paired runs (same
/// initial state, disturbances and schedule on both models, total time <=
/// horizon, periods in (0, T_L)) keep the trajectory mismatch within
///   |x^b_k - x^a_k| <= eta |x_0| + phi(sup_{i<k} |e_i|)
/// at every step, with phi taken from the certificate. Escape on either
/// model fails the candidate. Throws NoAdmissiblePeriod when the 1e-4 floor
/// fails.
RepmcOutcome check_repmc(const ClosedLoopModel& model_a,
                         const ClosedLoopModel& model_b,
                         const ConsistencyCertificate& cert, double M,
                         double E, double horizon, double eta,
                         std::size_t trials = 100, std::uint64_t seed = 3);

}  // namespace sdstab
