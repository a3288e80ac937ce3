#include "sdstab/consistency.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iterator>
#include <limits>

#include "sdstab/errors.hpp"
#include "sdstab/format.hpp"
#include "sdstab/parallel.hpp"
#include "sdstab/rng.hpp"
#include "sdstab/sampling.hpp"

namespace sdstab {

namespace {

constexpr double kPeriodFloor = 1e-4;
constexpr std::uint64_t kFitStream = 0xF17C4B2Aull;
constexpr std::uint64_t kComposeStream = 0xC0770D31ull;
constexpr std::uint64_t kRepmcStream = 0x4E9C55E7ull;
constexpr double kInf = std::numeric_limits<double>::infinity();

double oracle_slack(const ClosedLoopModel& a, const ClosedLoopModel& b) {
  // Mismatch below the flow oracle's own resolution cannot be attributed to
  // either model; validation margins are read modulo this slack.
  double tol = 1e-13;
  if (a.backend() == Backend::ExactOracle) tol = std::max(tol, a.oracle().abs_tol);
  if (b.backend() == Backend::ExactOracle) tol = std::max(tol, b.oracle().abs_tol);
  return 10.0 * tol;
}

}  // namespace

// ============================================================================
// GainFunction
// ============================================================================

GainFunction GainFunction::power(double c, double p) {
  if (!std::isfinite(c) || c < 0.0)
    throw ConfigError("gain coefficient must be finite and nonnegative");
  if (!std::isfinite(p) || p <= 0.0)
    throw ConfigError("gain exponent must be finite and positive");
  GainFunction g;
  if (c > 0.0) g.terms_.push_back({c, p});
  return g;
}

GainFunction GainFunction::plus(const GainFunction& o) const {
  GainFunction out;
  std::size_t i = 0, j = 0;
  while (i < terms_.size() || j < o.terms_.size()) {
    if (j == o.terms_.size() ||
        (i < terms_.size() && terms_[i].second < o.terms_[j].second)) {
      out.terms_.push_back(terms_[i++]);
    } else if (i == terms_.size() || o.terms_[j].second < terms_[i].second) {
      out.terms_.push_back(o.terms_[j++]);
    } else {
      out.terms_.push_back({terms_[i].first + o.terms_[j].first,
                            terms_[i].second});
      ++i, ++j;
    }
  }
  return out;
}

GainFunction GainFunction::scaled(double factor) const {
  if (!std::isfinite(factor) || factor < 0.0)
    throw ConfigError("gain scale factor must be finite and nonnegative");
  GainFunction out;
  if (factor == 0.0) return out;
  out.terms_ = terms_;
  for (auto& t : out.terms_) t.first *= factor;
  return out;
}

double GainFunction::operator()(double s) const {
  if (!(s >= 0.0)) throw DomainError("gain evaluated at a negative argument");
  double v = 0.0;
  for (const auto& [c, p] : terms_) v += c * std::pow(s, p);
  return v;
}

std::string GainFunction::print() const {
  if (terms_.empty()) return "0";
  std::string out;
  for (std::size_t i = terms_.size(); i-- > 0;) {
    if (!out.empty()) out += " + ";
    out += format_double(terms_[i].first) + "*s";
    if (terms_[i].second != 1.0) out += "^" + format_double(terms_[i].second);
  }
  return out;
}

// ============================================================================
// Envelope fitting
// ============================================================================

GainFunction fit_gain_envelope(const std::vector<std::pair<double, double>>& pts,
                               double s_ref, double floor) {
  std::vector<std::pair<double, double>> data;
  double s_max = 0.0, y_max = 0.0;
  for (const auto& [s, y] : pts) {
    if (!(s > 0.0) || !std::isfinite(s) || !std::isfinite(y)) continue;
    data.push_back({s, std::max(y, 0.0)});
    s_max = std::max(s_max, s);
    y_max = std::max(y_max, y);
  }
  if (data.empty() || y_max <= floor) return GainFunction();
  if (!(s_ref > 0.0)) s_ref = s_max;

  // Reduce to at most 64 constraints: per bucket keep the largest y, pinned
  // at the smallest s seen in the bucket, which only strengthens the
  // constraint for an increasing gain.
  constexpr std::size_t kBuckets = 64;
  std::vector<double> bs(kBuckets, 0.0), by(kBuckets, -1.0);
  for (const auto& [s, y] : data) {
    auto idx = static_cast<std::size_t>(s / s_max * kBuckets);
    if (idx >= kBuckets) idx = kBuckets - 1;
    if (y > by[idx]) {
      by[idx] = y;
      bs[idx] = s;
    } else if (by[idx] >= 0.0) {
      bs[idx] = std::min(bs[idx], s);
    }
  }
  std::vector<std::pair<double, double>> cons;
  for (std::size_t i = 0; i < kBuckets; ++i)
    if (by[i] > floor) cons.push_back({bs[i], by[i]});
  if (cons.empty()) return GainFunction();

  const double powers[] = {1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 9.0};
  double best_obj = kInf;
  double best_c1 = 0.0, best_c2 = 0.0, best_p1 = 1.0, best_p2 = 1.0;

  auto consider = [&](double c1, double p1, double c2, double p2) {
    if (!(c1 >= 0.0) || !(c2 >= 0.0) || !std::isfinite(c1) ||
        !std::isfinite(c2))
      return;
    for (const auto& [s, y] : cons)
      if (c1 * std::pow(s, p1) + c2 * std::pow(s, p2) < y * (1.0 - 1e-9))
        return;
    const double obj = c1 * std::pow(s_ref, p1) + c2 * std::pow(s_ref, p2);
    if (obj < best_obj) {
      best_obj = obj;
      best_c1 = c1, best_p1 = p1;
      best_c2 = c2, best_p2 = p2;
    }
  };

  for (std::size_t ia = 0; ia < std::size(powers); ++ia) {
    const double p1 = powers[ia];
    // Single-term envelope.
    double c_single = 0.0;
    for (const auto& [s, y] : cons)
      c_single = std::max(c_single, y / std::pow(s, p1));
    consider(c_single, p1, 0.0, p1);

    for (std::size_t ib = ia + 1; ib < std::size(powers); ++ib) {
      const double p2 = powers[ib];
      // Vertices of the feasible region: intersections of constraint pairs.
      for (std::size_t i = 0; i < cons.size(); ++i) {
        for (std::size_t j = i + 1; j < cons.size(); ++j) {
          const double a1 = std::pow(cons[i].first, p1);
          const double b1 = std::pow(cons[i].first, p2);
          const double a2 = std::pow(cons[j].first, p1);
          const double b2 = std::pow(cons[j].first, p2);
          const double det = a1 * b2 - a2 * b1;
          if (std::fabs(det) < 1e-300) continue;
          const double c1 = (cons[i].second * b2 - cons[j].second * b1) / det;
          const double c2 = (a1 * cons[j].second - a2 * cons[i].second) / det;
          consider(c1, p1, c2, p2);
        }
      }
    }
  }

  GainFunction g = GainFunction::power(best_c1, best_p1)
                       .plus(GainFunction::power(best_c2, best_p2));
  if (g.is_zero()) return g;
  // The bucket pinning is conservative, but guard against roundoff: inflate
  // until every original point is covered.
  double ratio = 1.0;
  for (const auto& [s, y] : data) {
    const double v = g(s);
    if (v > 0.0 && y > v) ratio = std::max(ratio, y / v);
  }
  if (ratio > 1.0) g = g.scaled(ratio * (1.0 + 1e-12));
  return g;
}

// ============================================================================
// Certificate arithmetic
// ============================================================================

double ConsistencyCertificate::rho_inv(double y) const {
  if (!(y >= 0.0)) throw DomainError("rho_inv evaluated at a negative value");
  if (rho_c <= 0.0) return kInf;
  return y / rho_c;
}

double ConsistencyCertificate::mismatch_bound(double state_gap,
                                              double max_norm,
                                              double err_norm,
                                              double T) const {
  return (1.0 + K * T) * state_gap +
         T * rho(T) * (max_norm + phi(err_norm));
}

double repmc_alpha(const ConsistencyCertificate& cert, double delta,
                   double T) {
  if (!(delta >= 0.0))
    throw ConfigError("alpha requires a nonnegative mismatch bound delta");
  if (!(T > 0.0) || !(T < cert.T_star))
    throw ConfigError("alpha requires T in (0, T_star) = (0, " +
                      format_double(cert.T_star) + ")");
  return (1.0 + cert.K * T) * delta +
         T * cert.rho(T) * (cert.M + cert.phi(cert.E));
}

double multistep_period_bound(const ConsistencyCertificate& cert,
                              double horizon, double eta) {
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  const double g = std::exp(cert.K * horizon) * horizon;
  return std::min({cert.T_star, cert.rho_inv(eta / g), cert.rho_inv(1.0 / g)});
}

// ============================================================================
// Euler mismatch law
// ============================================================================

MismatchLaw euler_mismatch_law(const ContinuousSystem& sys, const Box& states,
                               const Box& inputs,
                               const std::vector<double>& T_grid,
                               std::size_t samples_per_T,
                               FlowOracleConfig oracle) {
  const std::size_t n = sys.state_dim(), m = sys.input_dim();
  if (states.lo.size() != n || states.hi.size() != n)
    throw ConfigError("state box does not match the state dimension");
  if (inputs.lo.size() != m || inputs.hi.size() != m)
    throw ConfigError("input box does not match the input dimension");
  if (T_grid.empty()) throw ConfigError("empty period grid");
  for (double T : T_grid) oracle.validate(T);
  if (samples_per_T == 0) throw ConfigError("need at least one sample");

  LowDiscrepancy seq(n + m);
  std::vector<Vec> xs(samples_per_T, Vec(n)), us(samples_per_T, Vec(m));
  std::vector<double> pt(n + m);
  for (std::size_t i = 0; i < samples_per_T; ++i) {
    seq.point(i, pt.data());
    for (std::size_t j = 0; j < n; ++j)
      xs[i][j] = states.lo[j] + pt[j] * (states.hi[j] - states.lo[j]);
    for (std::size_t j = 0; j < m; ++j)
      us[i][j] = inputs.lo[j] + pt[n + j] * (inputs.hi[j] - inputs.lo[j]);
  }

  MismatchLaw law;
  std::atomic<std::size_t> skipped{0};
  std::vector<double> worst(T_grid.size(), 0.0), ratios(T_grid.size(), 0.0);
  parallel_for(T_grid.size(), [&](std::size_t ti) {
    const double T = T_grid[ti];
    double mm_max = 0.0, ratio_max = 0.0;
    for (std::size_t i = 0; i < samples_per_T; ++i) {
      const FlowResult r = integrate_flow(sys, xs[i], us[i], T, oracle);
      if (r.status != FlowStatus::Reached) {
        ++skipped;
        continue;
      }
      Vec f = sys.eval_f(xs[i], us[i]);
      Vec euler;
      axpy(xs[i], T, f, euler);
      const double mm = dist2(r.state, euler);
      mm_max = std::max(mm_max, mm);
      const double fn = norm2(f);
      if (fn < 1e-12) {
        ++skipped;
        continue;
      }
      ratio_max = std::max(ratio_max, mm / (T * T * fn));
    }
    worst[ti] = mm_max;
    ratios[ti] = ratio_max;
  });

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t pts = 0;
  for (std::size_t ti = 0; ti < T_grid.size(); ++ti) {
    law.per_T.push_back({T_grid[ti], worst[ti]});
    law.L_bar = std::max(law.L_bar, ratios[ti]);
    if (worst[ti] > 0.0) {
      const double lx = std::log(T_grid[ti]), ly = std::log(worst[ti]);
      sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
      ++pts;
    }
  }
  if (pts >= 2) {
    const double den = static_cast<double>(pts) * sxx - sx * sx;
    if (std::fabs(den) > 1e-300)
      law.slope = (static_cast<double>(pts) * sxy - sx * sy) / den;
  }
  law.skipped = skipped.load();
  return law;
}

// ============================================================================
// REPC fitting
// ============================================================================

namespace {

struct PairContext {
  const ClosedLoopModel& a;
  const ClosedLoopModel& b;
  double M, E;
  double slack;
  Rng master;

  [[nodiscard]] Rng sample_rng(std::uint64_t stage, std::size_t i) const {
    return master.split(stage).split(i);
  }
};

/// Largest closed-loop field difference quotient over sampled state pairs,
/// for both models. DomainError samples are skipped.
double fit_K_raw(const PairContext& ctx, double T_cap, std::size_t samples) {
  const std::size_t n = ctx.a.state_dim(), q = ctx.a.error_dim();
  std::vector<double> quot(samples, 0.0);
  parallel_for(samples, [&](std::size_t i) {
    Rng rng = ctx.sample_rng(1, i);
    const Vec xa = ball_uniform(rng, n, ctx.M);
    const Vec xb = ball_uniform(rng, n, ctx.M);
    const Vec e = ball_uniform(rng, q, ctx.E);
    const double T = T_cap * rng.next_open_unit();
    const double gap = dist2(xa, xb);
    if (gap < 1e-9) return;
    try {
      const double qa = dist2(ctx.a.field(xa, e, T), ctx.a.field(xb, e, T));
      const double qb = dist2(ctx.b.field(xa, e, T), ctx.b.field(xb, e, T));
      quot[i] = std::max(qa, qb) / gap;
    } catch (const DomainError&) {
    }
  });
  double K_raw = 0.0;
  for (double v : quot) K_raw = std::max(K_raw, v);
  return K_raw;
}

std::vector<double> log_spaced_periods(double T_cap, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t j = 0; j < count; ++j)
    out[j] = T_cap * std::exp(std::log(1.0 / 32.0) *
                              (1.0 - static_cast<double>(j) /
                                         static_cast<double>(count - 1)));
  return out;
}

/// Same-state mismatch envelope; false when any sample escapes.
bool fit_rho(const PairContext& ctx, double T_cap, std::size_t samples,
             double& rho_raw,
             std::vector<std::pair<double, double>>& rho_ls) {
  const std::size_t n = ctx.a.state_dim(), q = ctx.a.error_dim();
  const std::vector<double> grid = log_spaced_periods(T_cap, 16);
  const std::size_t per_T = std::max<std::size_t>(samples / grid.size(), 8);
  const Vec e0(q, 0.0);

  rho_raw = 0.0;
  rho_ls.clear();
  std::atomic<bool> escaped{false};
  std::vector<std::vector<double>> ys(grid.size()), zs(grid.size());
  for (auto& v : ys) v.assign(per_T, 0.0);
  for (auto& v : zs) v.assign(per_T, 0.0);

  parallel_for(grid.size() * per_T, [&](std::size_t idx) {
    if (escaped.load(std::memory_order_relaxed)) return;
    const std::size_t ti = idx / per_T, i = idx % per_T;
    const double T = grid[ti];
    Rng rng = ctx.sample_rng(2, idx);
    Vec x = ball_uniform(rng, n, ctx.M);
    const double xn = norm2(x);
    if (xn < 0.05 * ctx.M) return;  // quotient too noisy near the origin
    const auto sa = ctx.a.step_checked(x, e0, T);
    const auto sb = ctx.b.step_checked(x, e0, T);
    if (sa.escaped || sb.escaped) {
      escaped.store(true, std::memory_order_relaxed);
      return;
    }
    ys[ti][i] = dist2(sa.x, sb.x);
    zs[ti][i] = T * T * xn;
  });
  if (escaped.load()) return false;

  for (std::size_t ti = 0; ti < grid.size(); ++ti) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < per_T; ++i) {
      if (zs[ti][i] <= 0.0) continue;
      num += ys[ti][i] * zs[ti][i];
      den += zs[ti][i] * zs[ti][i];
      rho_raw = std::max(rho_raw, ys[ti][i] / zs[ti][i]);
    }
    rho_ls.push_back({grid[ti], den > 0.0 ? num / den : 0.0});
  }
  return true;
}

/// Error gain from the same-state mismatch: the held input couples the
/// error into the step, so the residual of mismatch / (rho_c T^2) above the
/// state norm, taken over states across the whole ball, is enveloped as a
/// function of |e|. False on escape.
bool fit_phi(const PairContext& ctx, double T_cap, double rho_c,
             std::size_t samples, GainFunction& phi) {
  phi = GainFunction();
  const std::size_t q = ctx.a.error_dim();
  if (ctx.E <= 0.0 || rho_c <= 0.0) return true;
  const std::size_t n = ctx.a.state_dim();
  const std::vector<double> grid = log_spaced_periods(T_cap, 16);

  std::atomic<bool> escaped{false};
  std::vector<std::pair<double, double>> pts(samples, {0.0, 0.0});
  parallel_for(samples, [&](std::size_t i) {
    if (escaped.load(std::memory_order_relaxed)) return;
    Rng rng = ctx.sample_rng(3, i);
    const Vec x = ball_uniform(rng, n, ctx.M);
    // Every eighth draw sits on the sphere |e| = E to anchor the envelope.
    const Vec e = (i % 8 == 0) ? sphere_point(rng, q, ctx.E)
                               : ball_uniform(rng, q, ctx.E);
    const double T = grid[i % grid.size()];
    const auto sa = ctx.a.step_checked(x, e, T);
    const auto sb = ctx.b.step_checked(x, e, T);
    if (sa.escaped || sb.escaped) {
      escaped.store(true, std::memory_order_relaxed);
      return;
    }
    const double quotient = dist2(sa.x, sb.x) / (rho_c * T * T);
    pts[i] = {norm2(e), std::max(0.0, quotient - norm2(x))};
  });
  if (escaped.load()) return false;

  phi = fit_gain_envelope(pts, ctx.E, ctx.slack).scaled(1.1);
  return true;
}

struct ValidationResult {
  bool escaped = false;
  double worst_margin = kInf;
  double max_violation = 0.0;
};

ValidationResult validate_pair(const PairContext& ctx,
                               const ConsistencyCertificate& cert,
                               double T_cap, std::size_t samples,
                               std::uint64_t stage) {
  const std::size_t n = ctx.a.state_dim(), q = ctx.a.error_dim();
  std::atomic<bool> escaped{false};
  std::vector<double> margins(samples, kInf);
  parallel_for(samples, [&](std::size_t i) {
    if (escaped.load(std::memory_order_relaxed)) return;
    Rng rng = ctx.sample_rng(stage, i);
    const Vec xa = ball_uniform(rng, n, ctx.M);
    const Vec xb = (i % 4 == 0) ? xa : ball_uniform(rng, n, ctx.M);
    const Vec e = ball_uniform(rng, q, ctx.E);
    const double T = T_cap * rng.next_open_unit();
    const auto sa = ctx.a.step_checked(xa, e, T);
    const auto sb = ctx.b.step_checked(xb, e, T);
    if (sa.escaped || sb.escaped) {
      escaped.store(true, std::memory_order_relaxed);
      return;
    }
    const double lhs = dist2(sa.x, sb.x);
    const double rhs = cert.mismatch_bound(dist2(xa, xb),
                                           std::max(norm2(xa), norm2(xb)),
                                           norm2(e), T) +
                       ctx.slack;
    margins[i] = rhs - lhs;
  });
  ValidationResult r;
  if (escaped.load()) {
    r.escaped = true;
    return r;
  }
  for (double m : margins) {
    r.worst_margin = std::min(r.worst_margin, m);
    if (m < 0.0) r.max_violation = std::max(r.max_violation, -m);
  }
  return r;
}

}  // namespace

ConsistencyCertificate fit_repc(const ClosedLoopModel& model_a,
                                const ClosedLoopModel& model_b, double M,
                                double E, double T_cap, std::size_t samples,
                                std::uint64_t seed) {
  if (model_a.state_dim() != model_b.state_dim() ||
      model_a.error_dim() != model_b.error_dim())
    throw ConfigError("models must share state and error dimensions");
  if (!(M >= 0.0) || !(E >= 0.0))
    throw ConfigError("region radii must be nonnegative");
  if (!(T_cap > 0.0)) throw ConfigError("T_cap must be positive");
  if (samples < 64) throw ConfigError("need at least 64 fitting samples");

  PairContext ctx{model_a, model_b, M, E, oracle_slack(model_a, model_b),
                  Rng(seed, kFitStream)};

  double candidate =
      std::min({T_cap, model_a.law().T_u(), model_b.law().T_u()});
  ConsistencyCertificate cert;
  cert.M = M;
  cert.E = E;
  cert.fit.samples = samples;
  cert.fit.validation_samples = samples;
  cert.fit.seed = seed;

  for (std::size_t halvings = 0;; ++halvings, candidate *= 0.5) {
    if (candidate < kPeriodFloor)
      throw NoCertificate(
          "mismatch inequality kept failing down to the period floor " +
          format_double(kPeriodFloor) + " on |x| <= " + format_double(M) +
          ", |e| <= " + format_double(E));
    cert.fit.halvings = halvings;

    cert.fit.K_raw = fit_K_raw(ctx, candidate, samples);
    cert.K = 1.1 * cert.fit.K_raw;

    if (!fit_rho(ctx, candidate, samples, cert.fit.rho_raw, cert.fit.rho_ls))
      continue;  // escape inside the fitting region: halve and refit
    cert.rho_c = cert.fit.rho_raw > 1e-15 ? 1.1 * cert.fit.rho_raw : 0.0;

    GainFunction phi;
    if (!fit_phi(ctx, candidate, std::max(cert.rho_c, 1e-12), samples, phi))
      continue;
    cert.phi = phi;
    if (cert.rho_c == 0.0 && !phi.is_zero()) cert.rho_c = 1e-12;

    cert.T_star = candidate;
    const ValidationResult v =
        validate_pair(ctx, cert, candidate, samples, 4 + halvings);
    if (v.escaped || v.max_violation > 0.0) {
      cert.fit.max_violation = v.max_violation;
      continue;
    }
    cert.fit.max_violation = 0.0;
    cert.fit.worst_margin = v.worst_margin;
    return cert;
  }
}

double validate_repc(const ConsistencyCertificate& cert,
                     const ClosedLoopModel& model_a,
                     const ClosedLoopModel& model_b, std::size_t samples,
                     std::uint64_t seed) {
  PairContext ctx{model_a, model_b, cert.M, cert.E,
                  oracle_slack(model_a, model_b), Rng(seed, kComposeStream)};
  const ValidationResult v =
      validate_pair(ctx, cert, cert.T_star, samples, 1);
  if (v.escaped) return -kInf;
  return v.worst_margin;
}

ConsistencyCertificate compose_repc(const ConsistencyCertificate& cert_ab,
                                    const ConsistencyCertificate& cert_bc,
                                    const ClosedLoopModel& model_a,
                                    const ClosedLoopModel& model_c,
                                    std::size_t validation_samples,
                                    std::uint64_t seed) {
  if (cert_ab.M != cert_bc.M || cert_ab.E != cert_bc.E)
    throw ConfigError("composition requires matching (M, E) regions");

  ConsistencyCertificate out;
  out.K = cert_ab.K;
  out.rho_c = cert_ab.rho_c + cert_bc.rho_c;
  out.phi = cert_ab.phi.plus(cert_bc.phi);
  out.T_star = std::min(cert_ab.T_star, cert_bc.T_star);
  out.M = cert_ab.M;
  out.E = cert_ab.E;
  out.fit.samples = 0;
  out.fit.validation_samples = validation_samples;
  out.fit.seed = seed;
  out.fit.method = "composed, revalidated";

  const double margin =
      validate_repc(out, model_a, model_c, validation_samples, seed);
  if (margin < 0.0)
    throw NoCertificate(
        "composed certificate failed revalidation on the end-to-end pair "
        "(worst margin " +
        format_double(margin) +
        "); the fitted constants are too tight to compose");
  out.fit.worst_margin = margin;
  return out;
}

// ============================================================================
// REPMC checking
// ============================================================================

namespace {

struct TrialOutcome {
  bool failed = false;
  double min_margin = kInf;
};

TrialOutcome repmc_trial(const ClosedLoopModel& a, const ClosedLoopModel& b,
                         const GainFunction& phi, double M, double E,
                         double horizon, double eta, double T_cand, Rng rng) {
  const std::size_t n = a.state_dim(), q = a.error_dim();
  const Vec xi = ball_uniform(rng, n, M);
  const bool constant_kind = rng.next_u64() % 2 == 0;
  const Vec e_const =
      (E > 0.0 && constant_kind) ? sphere_point(rng, q, E) : Vec(q, 0.0);

  TrialOutcome out;
  Vec xa = xi, xb = xi;
  double sup_e = 0.0, elapsed = 0.0;
  const double base = eta * norm2(xi);
  for (;;) {
    const double T = T_cand * rng.next_open_unit();
    if (elapsed + T > horizon) break;
    const Vec e = constant_kind ? e_const : ball_uniform(rng, q, E);
    const auto sa = a.step_checked(xa, e, T);
    const auto sb = b.step_checked(xb, e, T);
    if (sa.escaped || sb.escaped) {
      out.failed = true;
      out.min_margin = -kInf;
      return out;
    }
    xa = sa.x;
    xb = sb.x;
    sup_e = std::max(sup_e, norm2(e));
    elapsed += T;
    const double margin = base + phi(sup_e) - dist2(xa, xb);
    out.min_margin = std::min(out.min_margin, margin);
    if (margin < 0.0) {
      out.failed = true;
      return out;
    }
  }
  return out;
}

}  // namespace

RepmcOutcome check_repmc(const ClosedLoopModel& model_a,
                         const ClosedLoopModel& model_b,
                         const ConsistencyCertificate& cert, double M,
                         double E, double horizon, double eta,
                         std::size_t trials, std::uint64_t seed) {
  if (model_a.state_dim() != model_b.state_dim() ||
      model_a.error_dim() != model_b.error_dim())
    throw ConfigError("models must share state and error dimensions");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (trials == 0) throw ConfigError("need at least one trial");
  if (M > cert.M || E > cert.E)
    throw ConfigError("certificate region (M = " + format_double(cert.M) +
                      ", E = " + format_double(cert.E) +
                      ") does not cover the requested (M, E)");

  const Rng master(seed, kRepmcStream);
  RepmcOutcome out;
  out.trials = trials;
  out.seed = seed;

  double candidate = std::min({cert.T_star, model_a.law().T_u(),
                               model_b.law().T_u()});
  for (std::size_t halvings = 0;; ++halvings, candidate *= 0.5) {
    if (candidate < kPeriodFloor)
      throw NoAdmissiblePeriod(
          "trajectory mismatch exceeded eta*|x0| + phi(sup|e|) even at the "
          "period floor " +
          format_double(kPeriodFloor));
    out.halvings = halvings;

    std::vector<TrialOutcome> results(trials);
    parallel_for(trials, [&](std::size_t t) {
      results[t] = repmc_trial(model_a, model_b, cert.phi, M, E, horizon, eta,
                               candidate, master.split(t));
    });
    double worst = kInf;
    bool failed = false;
    for (const auto& r : results) {
      worst = std::min(worst, r.min_margin);
      failed = failed || r.failed;
    }
    if (!failed) {
      out.T_L = candidate;
      out.worst_margin = worst;
      return out;
    }
  }
}

}  // namespace sdstab
