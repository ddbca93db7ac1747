#pragma once

#include <string>
#include <vector>

#include "randecon/gaussian.hpp"

namespace randecon {

// Boundary of the arbitrage region for eps < 0 in the large-economy limit.
//
// A non-negative portfolio profile z(t) = s (t + xi)_+ over the Gaussian
// "asset fields" t is compared against every state-side threshold c. The
// state margin
//
//   M(xi, c; n, eps) = [eps sqrt(n) I1(c) + sqrt(q(xi)) I0(c)] / S(c) - sqrt(n) F(xi)
//
// with q = <z^2>/<z>^2, F = <z t>/<z>, S(c)^2 = I2(c) - I1(c)^2, is positive
// for every profile when the market is arbitrage free. The boundary n_c(eps)
// is where min_xi max_c M first reaches zero. The margin depends on the
// profile only through scale-free ratios of its moments.

struct BoundaryOptions {
  // Scale s of the portfolio profile; results must not depend on it.
  double profile_scale = 1.0;
  double n_lower = 1.0;   // initial bracket for n_critical, widened if needed
  double n_upper = 10.0;
  double xi_lower = -10.0;  // scan range for the profile offset
  double xi_upper = 10.0;
};

struct BoundaryPoint {
  double epsilon = 0.0;
  double n_critical = 0.0;
  double xi = 0.0;          // optimal profile offset
  double t0 = 0.0;          // optimal state threshold c
  double residual_1 = 0.0;  // margin at (xi, t0, n_critical)
  double residual_2 = 0.0;  // d margin / d xi at the same point
  int root_count = 0;       // local minima in xi found by the scan
  bool converged = false;
  std::string error;
};

// The state margin M and its partial derivatives.
double boundary_margin(double xi, double c, double n, double epsilon, double scale = 1.0);
double boundary_margin_dxi(double xi, double c, double n, double epsilon, double scale = 1.0);

struct StateOptimum {
  double c = 0.0;
  double margin = 0.0;
};
// max over c of M for a fixed profile.
StateOptimum worst_state(double xi, double n, double epsilon, double scale = 1.0);

struct ArbitrageMargin {
  double margin = 0.0;  // min over xi of max over c of M
  double xi = 0.0;
  double c = 0.0;
  int local_minima = 0;
};
// Positive inside the arbitrage-free region, negative inside the unstable one.
ArbitrageMargin arbitrage_margin(double n, double epsilon, const BoundaryOptions& options = {});

// n_critical for one eps < 0. Throws DomainError for eps >= 0 and
// NumericalError if no bracket is found.
BoundaryPoint critical_point(double epsilon, const BoundaryOptions& options = {});

// Per-point failures are recorded in the point and the curve continues.
std::vector<BoundaryPoint> boundary_curve(const std::vector<double>& epsilon_values,
                                          const BoundaryOptions& options = {});

}  // namespace randecon
