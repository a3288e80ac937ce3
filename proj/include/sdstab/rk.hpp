#pragma once

// ============================================================================
// Explicit Runge-Kutta one-step maps from Butcher tableaus. Under zero-order
// hold the input is frozen over the step, so the field is autonomous and no
// node vector is needed:
//   y_1 = x,  y_i = x + T * sum_{j<i} a_ij f(y_j, u),
//   F(x, u, T) = x + T * sum_i b_i f(y_i, u).
// ============================================================================

#include <cstddef>
#include <string>
#include <vector>

#include "sdstab/errors.hpp"
#include "sdstab/systems.hpp"
#include "sdstab/vecmath.hpp"

namespace sdstab {

struct ButcherTableau {
  std::string name = "custom";
  std::size_t stages = 0;
  std::vector<double> a;  ///< row-major stages*stages, strictly lower triangular
  std::vector<double> b;  ///< stages weights

  /// "euler", "heun", or "rk4". Throws UnknownTableau otherwise.
  static ButcherTableau builtin(const std::string& name);

  /// Shape, strict lower triangularity, 1 <= stages <= 16, and the
  /// first-order consistency condition |sum b_i - 1| <= 1e-12.
  void validate() const;

  [[nodiscard]] double a_at(std::size_t i, std::size_t j) const {
    return a[i * stages + j];
  }
  [[nodiscard]] double weight_sum() const;
};

/// One explicit Runge-Kutta step of the held-input field.
Vec rk_step(const ContinuousSystem& sys, const ButcherTableau& tab,
            const Vec& x, const Vec& u, double T);

}  // namespace sdstab
