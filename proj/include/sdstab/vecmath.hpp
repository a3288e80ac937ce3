#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace sdstab {

using Vec = std::vector<double>;

/// Euclidean norm.
inline double norm2(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

inline double norm2(const Vec& v) { return norm2(v.data(), v.size()); }

inline double dist2(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// out = a + s*b
inline void axpy(const Vec& a, double s, const Vec& b, Vec& out) {
  out.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
}

}  // namespace sdstab
