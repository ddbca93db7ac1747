#include "randecon/arbitrage_boundary.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include <boost/math/tools/roots.hpp>

#include "randecon/error.hpp"

namespace randecon {

namespace {

constexpr int kStateGrid = 401;
constexpr double kStateLow = -10.0;
constexpr double kStateHigh = 40.0;
constexpr int kProfileGrid = 201;

struct Profile {
  double q = 0.0;   // <z^2> / <z>^2
  double f = 0.0;   // <z t> / <z>
  double dq = 0.0;  // d/dxi
  double df = 0.0;
};

// Moments of z(t) = s (t + xi)_+ and their xi-derivatives.
Profile profile(double xi, double s) {
  const double i0 = gaussian_partial_moment(0, xi);
  const double i1 = gaussian_partial_moment(1, xi);
  const double i2 = gaussian_partial_moment(2, xi);
  const double m1 = s * i1, m2 = s * s * i2, mt = s * i0;
  const double dm1 = s * i0, dm2 = 2.0 * s * s * i1, dmt = s * normal_pdf(xi);
  Profile p;
  p.q = m2 / (m1 * m1);
  p.f = mt / m1;
  p.dq = (dm2 * m1 - 2.0 * m2 * dm1) / (m1 * m1 * m1);
  p.df = (dmt * m1 - mt * dm1) / (m1 * m1);
  return p;
}

struct StateTerms {
  double i0, i1, spread;  // spread = sqrt(I2 - I1^2)
};

StateTerms state_terms(double c) {
  const double i0 = gaussian_partial_moment(0, c);
  const double i1 = gaussian_partial_moment(1, c);
  const double i2 = gaussian_partial_moment(2, c);
  return {i0, i1, std::sqrt(std::max(i2 - i1 * i1, 1e-300))};
}

double margin_from(const Profile& p, const StateTerms& s, double n, double epsilon) {
  return (epsilon * std::sqrt(n) * s.i1 + std::sqrt(p.q) * s.i0) / s.spread - std::sqrt(n) * p.f;
}

// Numerator of dM/dc up to the positive factor 1/S^3.
double state_slope(double c, double a, double b) {
  const StateTerms s = state_terms(c);
  const double num = a * s.i1 + b * s.i0;
  const double dnum = a * s.i0 + b * normal_pdf(c);
  return dnum * s.spread * s.spread - num * s.i1 * (1.0 - s.i0);
}

boost::math::tools::eps_tolerance<double> tight() {
  return boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 3);
}

}  // namespace

double boundary_margin(double xi, double c, double n, double epsilon, double scale) {
  return margin_from(profile(xi, scale), state_terms(c), n, epsilon);
}

double boundary_margin_dxi(double xi, double c, double n, double /*epsilon*/, double scale) {
  const Profile p = profile(xi, scale);
  const StateTerms s = state_terms(c);
  return s.i0 / s.spread * p.dq / (2.0 * std::sqrt(p.q)) - std::sqrt(n) * p.df;
}

StateOptimum worst_state(double xi, double n, double epsilon, double scale) {
  const Profile p = profile(xi, scale);
  const double step = (kStateHigh - kStateLow) / (kStateGrid - 1);
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < kStateGrid; ++k) {
    const double value = margin_from(p, state_terms(kStateLow + k * step), n, epsilon);
    if (value > best_value) {
      best_value = value;
      best = k;
    }
  }
  StateOptimum out{kStateLow + best * step, best_value};
  if (best == 0 || best == kStateGrid - 1) return out;

  const double a = epsilon * std::sqrt(n);
  const double b = std::sqrt(p.q);
  const auto slope = [&](double c) { return state_slope(c, a, b); };
  const double lo = out.c - step, hi = out.c + step;
  if (!(slope(lo) >= 0.0 && slope(hi) <= 0.0)) return out;
  std::uintmax_t iterations = 200;
  const auto [x0, x1] = boost::math::tools::toms748_solve(slope, lo, hi, tight(), iterations);
  const double c = 0.5 * (x0 + x1);
  const double value = margin_from(p, state_terms(c), n, epsilon);
  if (value >= out.margin) out = {c, value};
  return out;
}

ArbitrageMargin arbitrage_margin(double n, double epsilon, const BoundaryOptions& options) {
  const double s = options.profile_scale;
  const double step = (options.xi_upper - options.xi_lower) / (kProfileGrid - 1);
  std::vector<double> values(kProfileGrid);
  for (int k = 0; k < kProfileGrid; ++k)
    values[k] = worst_state(options.xi_lower + k * step, n, epsilon, s).margin;

  ArbitrageMargin out;
  int best = 0;
  for (int k = 0; k < kProfileGrid; ++k) {
    if (values[k] < values[best]) best = k;
    const bool left = k == 0 || values[k] < values[k - 1];
    const bool right = k == kProfileGrid - 1 || values[k] <= values[k + 1];
    if (left && right) ++out.local_minima;
  }
  out.xi = options.xi_lower + best * step;
  StateOptimum state = worst_state(out.xi, n, epsilon, s);
  out.c = state.c;
  out.margin = state.margin;
  if (best == 0 || best == kProfileGrid - 1) return out;

  // By the envelope theorem d/dxi max_c M = dM/dxi at the optimal c.
  const auto slope = [&](double xi) {
    return boundary_margin_dxi(xi, worst_state(xi, n, epsilon, s).c, n, epsilon, s);
  };
  const double lo = out.xi - step, hi = out.xi + step;
  if (!(slope(lo) <= 0.0 && slope(hi) >= 0.0)) return out;
  std::uintmax_t iterations = 200;
  const auto [x0, x1] = boost::math::tools::toms748_solve(slope, lo, hi, tight(), iterations);
  const double xi = 0.5 * (x0 + x1);
  state = worst_state(xi, n, epsilon, s);
  if (state.margin <= out.margin + 1e-12) {
    out.xi = xi;
    out.c = state.c;
    out.margin = state.margin;
  }
  return out;
}

BoundaryPoint critical_point(double epsilon, const BoundaryOptions& options) {
  if (!(epsilon < 0.0)) throw DomainError("arbitrage boundary exists only for epsilon < 0");
  if (!(options.profile_scale > 0.0)) throw ConfigError("profile scale must be positive");

  const auto margin = [&](double n) { return arbitrage_margin(n, epsilon, options).margin; };
  double lo = options.n_lower, hi = options.n_upper;
  double f_lo = margin(lo), f_hi = margin(hi);
  for (int widen = 0; widen < 30 && f_lo <= 0.0; ++widen) f_lo = margin(lo *= 0.5);
  for (int widen = 0; widen < 30 && f_hi >= 0.0; ++widen) f_hi = margin(hi *= 2.0);
  if (!(f_lo > 0.0 && f_hi < 0.0))
    throw NumericalError("no sign change of the arbitrage margin in n", std::min(f_lo, -f_hi));

  std::uintmax_t iterations = 200;
  const auto [n0, n1] =
      boost::math::tools::toms748_solve(margin, lo, hi, f_lo, f_hi, tight(), iterations);
  BoundaryPoint point;
  point.epsilon = epsilon;
  point.n_critical = 0.5 * (n0 + n1);
  const ArbitrageMargin at = arbitrage_margin(point.n_critical, epsilon, options);
  point.xi = at.xi;
  point.t0 = at.c;
  point.residual_1 = at.margin;
  point.residual_2 =
      boundary_margin_dxi(at.xi, at.c, point.n_critical, epsilon, options.profile_scale);
  point.root_count = at.local_minima;
  point.converged = std::abs(point.residual_1) < 1e-9 && std::abs(point.residual_2) < 1e-9;
  return point;
}

std::vector<BoundaryPoint> boundary_curve(const std::vector<double>& epsilon_values,
                                          const BoundaryOptions& options) {
  std::vector<BoundaryPoint> curve;
  curve.reserve(epsilon_values.size());
  for (double eps : epsilon_values) {
    try {
      curve.push_back(critical_point(eps, options));
    } catch (const Error& e) {
      BoundaryPoint failed;
      failed.epsilon = eps;
      failed.n_critical = std::numeric_limits<double>::quiet_NaN();
      failed.error = e.what();
      curve.push_back(failed);
    }
  }
  return curve;
}

}  // namespace randecon
