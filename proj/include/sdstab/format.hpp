#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace sdstab {

/// Shortest decimal string that parses back to exactly the same double.
/// Deterministic (pure function of the value), so emitted artifacts are
/// byte-identical across runs.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

}  // namespace sdstab
