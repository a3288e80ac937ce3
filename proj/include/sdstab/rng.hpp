#pragma once

#include <cmath>
#include <cstdint>

namespace sdstab {

/// Counter-based pseudorandom generator built on the SplitMix64 finalizer.
///
/// The i-th output is mix(key + i*GOLDEN), a pure function of (key, i), so
/// streams can be split without coordination: `split(tag)` derives an
/// independent child key, and two generators with the same (seed, tag chain)
/// produce identical sequences on every platform. All draws in the library go
/// through this type; nothing uses std::uniform_*_distribution, whose output
/// is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x6A09E667F3BCC909ull))) {}

  /// Child generator for an independent stream. Children with different tags
  /// never collide regardless of how many values the parent has produced.
  [[nodiscard]] Rng split(std::uint64_t tag) const {
    Rng child(0);
    child.key_ = mix(key_ ^ mix(tag + 0xBB67AE8584CAA73Bull));
    return child;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * GOLDEN); }

  /// Uniform on [0, 1): 53 random mantissa bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform strictly inside (0, 1); used for sampling periods in open
  /// intervals (0, T).
  double next_open_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + next_unit() * (hi - lo); }

  /// Uniform on {0, ..., n-1} (n > 0); rejection-free modulo is fine at the
  /// trial counts used here.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (one value per call; the pair's second
  /// half is discarded to keep draws independent of call sites).
  double next_normal() {
    double u = next_unit();
    while (u <= 0.0) u = next_unit();
    const double v = next_unit();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * v);
  }

 private:
  static constexpr std::uint64_t GOLDEN = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Additive-recurrence low-discrepancy sequence on the unit cube, used for
/// deterministic sup estimation. Coordinates use the inverse golden-ratio
/// family alpha_j = frac(phi^-(j+1)) generalized via the Kronecker sequence
/// with distinct irrational multipliers per dimension.
class LowDiscrepancy {
 public:
  explicit LowDiscrepancy(std::size_t dim) : dim_(dim) {}

  /// Fills `out[0..dim)` with point #i of the sequence.
  void point(std::uint64_t i, double* out) const {
    // Multipliers come from the nested-radical generalization of the golden
    // ratio (Roberts' R_d sequence); they are irrational and pairwise
    // independent enough for the few dimensions used here.
    double g = 1.0;
    for (int it = 0; it < 32; ++it) g = std::pow(1.0 + g, 1.0 / (dim_ + 1.0));
    double a = 1.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      a /= g;
      const double v = 0.5 + a * static_cast<double>(i + 1);
      out[j] = v - std::floor(v);
    }
  }

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
};

}  // namespace sdstab
