#include "sdstab/rk.hpp"

#include <cmath>

namespace sdstab {

ButcherTableau ButcherTableau::builtin(const std::string& name) {
  ButcherTableau t;
  t.name = name;
  if (name == "euler") {
    t.stages = 1;
    t.a = {0.0};
    t.b = {1.0};
  } else if (name == "heun") {
    t.stages = 2;
    t.a = {0.0, 0.0,
           1.0, 0.0};
    t.b = {0.5, 0.5};
  } else if (name == "rk4") {
    t.stages = 4;
    t.a = {0.0, 0.0, 0.0, 0.0,
           0.5, 0.0, 0.0, 0.0,
           0.0, 0.5, 0.0, 0.0,
           0.0, 0.0, 1.0, 0.0};
    t.b = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};
  } else {
    throw UnknownTableau("no builtin tableau named '" + name + "'");
  }
  t.validate();
  return t;
}

double ButcherTableau::weight_sum() const {
  double s = 0.0;
  for (double w : b) s += w;
  return s;
}

void ButcherTableau::validate() const {
  if (stages < 1 || stages > 16)
    throw std::invalid_argument("tableau must have between 1 and 16 stages");
  if (a.size() != stages * stages || b.size() != stages)
    throw std::invalid_argument("tableau arrays do not match the stage count");
  for (std::size_t i = 0; i < stages; ++i)
    for (std::size_t j = i; j < stages; ++j)
      if (a_at(i, j) != 0.0)
        throw std::invalid_argument(
            "tableau is not strictly lower triangular (explicit methods "
            "only)");
  for (double v : a)
    if (!std::isfinite(v))
      throw std::invalid_argument("tableau coefficients must be finite");
  for (double v : b)
    if (!std::isfinite(v))
      throw std::invalid_argument("tableau weights must be finite");
  if (std::fabs(weight_sum() - 1.0) > 1e-12)
    throw std::invalid_argument(
        "tableau weights must sum to 1 (first-order consistency)");
}

Vec rk_step(const ContinuousSystem& sys, const ButcherTableau& tab,
            const Vec& x, const Vec& u, double T) {
  if (x.size() != sys.state_dim() || u.size() != sys.input_dim())
    throw std::invalid_argument("state/input dimension mismatch");
  const std::size_t n = x.size(), s = tab.stages;

  std::vector<Vec> k(s, Vec(n));
  Vec y(n);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < i; ++j) acc += tab.a_at(i, j) * k[j][c];
      y[c] = x[c] + T * acc;
    }
    sys.eval_f(y.data(), u.data(), k[i].data());
  }

  Vec out(n);
  for (std::size_t c = 0; c < n; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s; ++i) acc += tab.b[i] * k[i][c];
    out[c] = x[c] + T * acc;
  }
  return out;
}

}  // namespace sdstab
