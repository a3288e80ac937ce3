#pragma once

#include <cmath>
#include <cstddef>

#include "sdstab/rng.hpp"
#include "sdstab/vecmath.hpp"

namespace sdstab {

/// Point on the sphere |v| = radius (Gaussian direction method).
inline Vec sphere_point(Rng& rng, std::size_t n, double radius) {
  Vec v(n);
  double norm = 0.0;
  do {
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.next_normal();
    norm = norm2(v);
  } while (norm < 1e-12);
  for (double& c : v) c *= radius / norm;
  return v;
}

/// Uniform draw from the closed ball |v| <= radius.
inline Vec ball_uniform(Rng& rng, std::size_t n, double radius) {
  if (radius <= 0.0) return Vec(n, 0.0);
  const double r =
      radius * std::pow(rng.next_unit(), 1.0 / static_cast<double>(n));
  return sphere_point(rng, n, r);
}

}  // namespace sdstab
