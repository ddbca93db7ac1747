#pragma once

#include <cmath>

namespace randecon {

// Constant relative risk aversion utility u(c) = (c^a - 1) / a, a in (0, 1).
struct Crra {
  double exponent = 0.5;

  double value(double c) const { return (std::pow(c, exponent) - 1.0) / exponent; }
  double marginal(double c) const { return std::pow(c, exponent - 1.0); }
  double curvature(double c) const {
    return (exponent - 1.0) * std::pow(c, exponent - 2.0);
  }
};

}  // namespace randecon
