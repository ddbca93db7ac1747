#include "randecon/saddlepoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "randecon/arbitrage_boundary.hpp"
#include "randecon/error.hpp"
#include "randecon/utility.hpp"

namespace randecon {

namespace {

const GaussHermite& rule(int order) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermite>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<GaussHermite>(order);
  return *slot;
}

// Everything computed from (chi, kappa, G) by averaging over t and p.
struct StateAverages {
  double lambda = 0.0;
  double sigma = 0.0;
  double nu = 0.0;
  double spending = 0.0;      // <c p>
  double no_arbitrage = 0.0;  // <(u'/p)(c p - 1)>
  double utility = 0.0;       // <u(c*) - chi (u'/p)^2 / 2>
};

StateAverages state_averages(const OrderParameters& params, double n,
                             const SaddleOptions& options) {
  const GaussHermite& gh = rule(options.quadrature_order);
  const Crra u{options.crra_exponent};
  const double prices[2] = {1.0 - options.price_spread, 1.0 + options.price_spread};
  const int m = gh.order();
  std::vector<double> marginal(2 * static_cast<std::size_t>(m));
  StateAverages avg;
  for (int k = 0; k < 2; ++k) {
    const double p = prices[k];
    for (int j = 0; j < m; ++j) {
      const double w = 0.5 * gh.weights()[j];
      const double c = c_star(gh.nodes()[j], p, params, n, options.crra_exponent);
      const double x = u.marginal(c) / p;
      const double curv = u.curvature(c);
      marginal[k * m + j] = x;
      avg.lambda += w * x;
      avg.nu += w * curv / (params.chi * curv - p * p);
      avg.spending += w * c * p;
      avg.no_arbitrage += w * x * (c * p - 1.0);
      avg.utility += w * (u.value(c) - 0.5 * params.chi * x * x);
    }
  }
  double var = 0.0;
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < m; ++j) {
      const double d = marginal[k * m + j] - avg.lambda;
      var += 0.5 * gh.weights()[j] * d * d;
    }
  avg.sigma = std::sqrt(var);
  return avg;
}

// Portfolio-side update given (lambda, sigma, nu).
struct PortfolioUpdate {
  double big_g, chi, kappa;
  PortfolioMoments moments;
};

PortfolioUpdate portfolio_update(const OrderParameters& params, double n, double epsilon) {
  const PortfolioMoments mom = portfolio_moments(params, epsilon);
  PortfolioUpdate up;
  up.moments = mom;
  up.big_g = mom.second;
  up.chi = n * mom.traded_fraction / params.nu;
  up.kappa = params.lambda * up.chi + n * epsilon * mom.mean;
  return up;
}

// Reduced unknowns x = (log chi, kappa / chi, log G); kappa / chi stays O(1)
// while chi itself diverges near completeness.
using Vec3 = Eigen::Vector3d;

OrderParameters from_reduced(const Vec3& x) {
  OrderParameters p;
  p.chi = std::exp(x(0));
  p.kappa = x(1) * p.chi;
  p.big_g = std::exp(x(2));
  return p;
}

struct MapResult {
  OrderParameters params;  // lambda, sigma, nu filled in
  Vec3 residual;
  bool ok = false;
};

MapResult reduced_map(const Vec3& x, double n, double epsilon, const SaddleOptions& options) {
  MapResult r;
  r.params = from_reduced(x);
  try {
    const StateAverages avg = state_averages(r.params, n, options);
    r.params.lambda = avg.lambda;
    r.params.sigma = avg.sigma;
    r.params.nu = avg.nu;
    if (!(avg.sigma > 0.0) || !(avg.nu > 0.0)) return r;
    const PortfolioUpdate up = portfolio_update(r.params, n, epsilon);
    if (!(up.chi > 0.0) || !(up.big_g > 0.0)) return r;
    r.residual << std::log(up.chi) - x(0), up.kappa / up.chi - x(1),
        std::log(up.big_g) - x(2);
    r.ok = r.residual.allFinite();
  } catch (const NumericalError&) {
    r.ok = false;
  }
  return r;
}

Vec3 default_start() { return Vec3(0.0, 0.0, std::log(0.1)); }

Vec3 to_reduced(const OrderParameters& p) {
  return Vec3(std::log(p.chi), p.kappa / p.chi, std::log(std::max(p.big_g, 1e-300)));
}

double scaled(double updated, double old) {
  return std::abs(updated - old) / std::max(1.0, std::abs(old));
}

SaddleSolution finish(const MapResult& at, double n, double epsilon, int iterations,
                      const SaddleOptions& options) {
  SaddleSolution sol;
  sol.n = n;
  sol.epsilon = epsilon;
  sol.crra_exponent = options.crra_exponent;
  sol.price_spread = options.price_spread;
  sol.params = at.params;
  sol.iterations = iterations;

  // One full pass of the six equations from the final parameters.
  const OrderParameters& p = sol.params;
  const StateAverages avg = state_averages(p, n, options);
  const PortfolioUpdate up = portfolio_update(p, n, epsilon);
  sol.residuals = {scaled(avg.lambda, p.lambda), scaled(avg.nu, p.nu),
                   scaled(avg.sigma, p.sigma),   scaled(up.big_g, p.big_g),
                   scaled(up.chi, p.chi),        scaled(up.kappa, p.kappa)};
  sol.residual = *std::max_element(sol.residuals.begin(), sol.residuals.end());

  sol.mean_z = up.moments.mean;
  sol.completeness = p.chi * p.nu;
  sol.emm_distance = p.sigma / p.lambda;
  sol.volume = n * sol.mean_z;
  sol.revenue = epsilon * sol.volume;
  sol.budget_identity = avg.spending + epsilon * n * sol.mean_z - 1.0;
  sol.no_arbitrage_identity = avg.no_arbitrage;
  sol.utility = n * 0.5 * p.nu * p.big_g + 0.5 * n * p.big_g * p.nu + p.kappa * p.lambda -
                0.5 * p.chi * p.sigma * p.sigma - 0.5 * p.chi * p.lambda * p.lambda + avg.utility;
  sol.converged = sol.residual < options.tolerance;
  sol.at_boundary = sol.completeness > 1.0 - 1e-4;
  return sol;
}

// Damped fixed-point passes on the reduced unknowns.
Vec3 damped_warmup(Vec3 x, double n, double epsilon, const SaddleOptions& options) {
  double alpha = 0.5;
  MapResult cur = reduced_map(x, n, epsilon, options);
  for (int it = 0; it < options.warmup_iterations && cur.ok; ++it) {
    const Vec3 trial = x + alpha * cur.residual;
    const MapResult next = reduced_map(trial, n, epsilon, options);
    if (next.ok && next.residual.norm() < cur.residual.norm()) {
      x = trial;
      cur = next;
    } else {
      alpha *= 0.5;
      if (alpha < 1e-6) break;
    }
  }
  return x;
}

// Residual functor for MINPACK's hybrid method. Points where the map is
// undefined get a large constant residual so the trust region shrinks.
struct ReducedFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  double n, epsilon;
  const SaddleOptions* options;
  mutable std::vector<double>* trace;

  int inputs() const { return 3; }
  int values() const { return 3; }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    const MapResult r = reduced_map(x, n, epsilon, *options);
    if (r.ok) {
      f = r.residual;
      trace->push_back(r.residual.lpNorm<Eigen::Infinity>());
    } else {
      f = Eigen::VectorXd::Constant(3, 1e3);
    }
    return 0;
  }
};

// Powell's hybrid method with a forward-difference Jacobian.
SaddleSolution hybrid(const Vec3& start, double n, double epsilon, const SaddleOptions& options) {
  std::vector<double> trace;
  if (!reduced_map(start, n, epsilon, options).ok)
    throw NumericalError("saddle-point equations undefined at the starting point", 1.0);
  ReducedFunctor functor{n, epsilon, &options, &trace};
  Eigen::NumericalDiff<ReducedFunctor> diff(functor);
  Eigen::HybridNonLinearSolver<Eigen::NumericalDiff<ReducedFunctor>> solver(diff);
  solver.parameters.xtol = 1e-15;
  solver.parameters.maxfev = 40 * options.max_iterations;
  Eigen::VectorXd x = start;
  solver.solve(x);
  const MapResult at = reduced_map(x, n, epsilon, options);
  if (!at.ok) throw NumericalError("saddle-point iteration left the valid domain", 1.0, trace);
  SaddleSolution sol = finish(at, n, epsilon, static_cast<int>(solver.nfev), options);
  if (!sol.converged) {
    trace.push_back(sol.residual);
    throw NumericalError("saddle-point iteration did not converge", sol.residual, trace);
  }
  return sol;
}

// Newton with a forward-difference Jacobian. A full step is accepted even if
// it raises |F| moderately (a few times in a row at most); otherwise the step
// is backtracked until |F| decreases.
SaddleSolution newton(Vec3 x, double n, double epsilon, const SaddleOptions& options) {
  std::vector<double> trace;
  MapResult cur = reduced_map(x, n, epsilon, options);
  if (!cur.ok) throw NumericalError("saddle-point equations undefined at the starting point", 1.0);
  const double target = 0.05 * options.tolerance;
  double best = cur.residual.norm();
  int uphill = 0;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const double norm = cur.residual.lpNorm<Eigen::Infinity>();
    trace.push_back(norm);
    if (norm < target) break;

    Eigen::Matrix3d jac;
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-7 * std::max(1.0, std::abs(x(k)));
      Vec3 xh = x;
      xh(k) += h;
      const MapResult fh = reduced_map(xh, n, epsilon, options);
      if (!fh.ok) throw NumericalError("saddle-point Jacobian undefined", norm, trace);
      jac.col(k) = (fh.residual - cur.residual) / h;
    }
    Vec3 step = jac.fullPivLu().solve(-cur.residual);
    if (!step.allFinite()) throw NumericalError("singular saddle-point Jacobian", norm, trace);
    const double largest = step.lpNorm<Eigen::Infinity>();
    if (largest > 5.0) step *= 5.0 / largest;

    const MapResult full = reduced_map(x + step, n, epsilon, options);
    const double current = cur.residual.norm();
    if (full.ok && full.residual.norm() < 5.0 * current && uphill < 4) {
      x += step;
      cur = full;
      if (cur.residual.norm() < best) {
        best = cur.residual.norm();
        uphill = 0;
      } else {
        ++uphill;
      }
      continue;
    }
    double alpha = 0.5;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, alpha *= 0.5) {
      const MapResult trial = reduced_map(x + alpha * step, n, epsilon, options);
      if (trial.ok && trial.residual.norm() < (1.0 - 1e-4 * alpha) * current) {
        x += alpha * step;
        cur = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    best = std::min(best, cur.residual.norm());
    uphill = 0;
  }
  SaddleSolution sol = finish(cur, n, epsilon, it, options);
  if (!sol.converged) {
    trace.push_back(sol.residual);
    throw NumericalError("saddle-point iteration did not converge", sol.residual, trace);
  }
  return sol;
}

SaddleSolution solve_from(const Vec3& start, double n, double epsilon,
                          const SaddleOptions& options) {
  Vec3 x = start;
  if (options.warmup_iterations > 0) x = damped_warmup(x, n, epsilon, options);
  try {
    return newton(x, n, epsilon, options);
  } catch (const NumericalError&) {
    return hybrid(x, n, epsilon, options);
  }
}

// Walks n from a small value up to the target, adapting the step.
SaddleSolution continuation_in_n(double n, double epsilon, const SaddleOptions& options) {
  double current = std::min(n, 0.25);
  SaddleSolution sol = solve_from(default_start(), current, epsilon, options);
  double step = 0.25;
  while (current < n) {
    const double next = std::min(n, current + step);
    try {
      sol = solve_from(to_reduced(sol.params), next, epsilon, options);
      current = next;
      step *= 1.5;
    } catch (const NumericalError&) {
      step *= 0.5;
      if (step < 1e-4) throw;
    }
  }
  return sol;
}

// For eps > 0: solves at a larger premium, then walks eps down geometrically.
SaddleSolution continuation_in_epsilon(double n, double epsilon, const SaddleOptions& options) {
  double current = epsilon;
  std::optional<SaddleSolution> sol;
  for (int k = 0; k < 12 && !sol; ++k) {
    current *= 4.0;
    try {
      sol = solve_from(default_start(), n, current, options);
    } catch (const NumericalError&) {
    }
  }
  if (!sol) throw NumericalError("no starting premium found for continuation", 1.0);
  double ratio = 0.5;
  while (current > epsilon) {
    const double next = std::max(epsilon, current * ratio);
    try {
      sol = solve_from(to_reduced(sol->params), n, next, options);
      current = next;
      ratio = std::max(0.1, ratio * ratio);
    } catch (const NumericalError&) {
      ratio = std::sqrt(ratio);
      if (ratio > 0.999) throw;
    }
  }
  return *sol;
}

void check_inputs(double n, double epsilon, const SaddleOptions& options) {
  if (!(n > 0.0) || !std::isfinite(n)) throw ConfigError("n must be positive");
  if (!std::isfinite(epsilon)) throw ConfigError("epsilon must be finite");
  if (!(options.crra_exponent > 0.0 && options.crra_exponent < 1.0))
    throw ConfigError("crra exponent must lie in (0, 1)");
  if (!(options.price_spread >= 0.0 && options.price_spread < 1.0))
    throw ConfigError("price spread must lie in [0, 1)");
  if (options.quadrature_order < 16) throw ConfigError("quadrature order must be at least 16");
}

}  // namespace

double z_star(double t, const OrderParameters& params, double epsilon) {
  const double drive = params.sigma * t - epsilon * params.lambda;
  return drive > 0.0 ? drive / params.nu : 0.0;
}

double c_star(double t, double p, const OrderParameters& params, double n, double crra_exponent) {
  const double a = crra_exponent;
  const double chi = params.chi;
  const double r = 1.0 - params.kappa - std::sqrt(n * params.big_g) * t;
  // f(y) = chi e^{(a-1) y}/p - p e^y + r, strictly decreasing in y = log c.
  const auto f = [&](double y) { return chi * std::exp((a - 1.0) * y) / p - p * std::exp(y) + r; };
  const auto fdf = [&](double y) {
    const double left = chi * std::exp((a - 1.0) * y) / p;
    const double right = p * std::exp(y);
    return std::make_tuple(left - right + r, (a - 1.0) * left - right);
  };

  // Each asymptotic root bounds the true one from one side.
  double guess = std::log(std::max(std::pow(chi / (p * p), 1.0 / (2.0 - a)), 1e-300));
  if (r > 0.0) guess = std::max(guess, std::log(r / p));
  double lo = guess, hi = guess;
  double width = 1.0;
  int expand = 0;
  while (f(lo) <= 0.0 && expand++ < 200) lo -= (width *= 2.0);
  width = 1.0;
  expand = 0;
  while (f(hi) >= 0.0 && expand++ < 200) hi += (width *= 2.0);
  const double flo = f(lo), fhi = f(hi);
  if (!(flo > 0.0) || !(fhi < 0.0) || !std::isfinite(flo) || !std::isfinite(fhi))
    throw NumericalError("c* root not bracketed", std::min(std::abs(flo), std::abs(fhi)));
  if (flo == 0.0) return std::exp(lo);

  std::uintmax_t iterations = 200;
  const double y = boost::math::tools::newton_raphson_iterate(
      fdf, std::clamp(guess, lo, hi), lo, hi, std::numeric_limits<double>::digits - 2, iterations);
  return std::exp(y);
}

PortfolioMoments portfolio_moments(const OrderParameters& params, double epsilon) {
  const double xi = -epsilon * params.lambda / params.sigma;
  const double scale = params.sigma / params.nu;
  PortfolioMoments m;
  m.traded_fraction = gaussian_partial_moment(0, xi);
  m.mean = scale * gaussian_partial_moment(1, xi);
  m.second = scale * scale * gaussian_partial_moment(2, xi);
  m.cross = scale * m.traded_fraction;
  return m;
}

SaddleSolution solve_order_parameters(double n, double epsilon, const SaddleOptions& options,
                                      const std::optional<OrderParameters>& initial) {
  check_inputs(n, epsilon, options);
  if (options.check_domain && epsilon < 0.0 && arbitrage_margin(n, epsilon).margin <= 0.0)
    throw DomainError("(n, epsilon) lies in the arbitrage region");

  const Vec3 start = initial ? to_reduced(*initial) : default_start();
  try {
    return solve_from(start, n, epsilon, options);
  } catch (const NumericalError&) {
  }
  if (initial) {
    try {
      return solve_from(default_start(), n, epsilon, options);
    } catch (const NumericalError&) {
    }
  }
  if (epsilon > 0.0) {
    try {
      return continuation_in_epsilon(n, epsilon, options);
    } catch (const NumericalError&) {
      if (n <= 0.25) throw;
    }
  } else if (n <= 0.25) {
    throw NumericalError("saddle-point iteration did not converge", 1.0);
  }
  return continuation_in_n(n, epsilon, options);
}

std::vector<double> consumption_density(const SaddleSolution& solution,
                                        const std::vector<double>& grid) {
  const OrderParameters& p = solution.params;
  const Crra u{solution.crra_exponent};
  const double spread = std::sqrt(solution.n * p.big_g);
  std::vector<double> density(grid.size(), 0.0);
  if (!(spread > 1e-300)) return density;
  const double prices[2] = {1.0 - solution.price_spread, 1.0 + solution.price_spread};
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double c = grid[k];
    if (!(c > 0.0)) continue;
    for (double price : prices) {
      const double t = (p.chi * u.marginal(c) / price - c * price + 1.0 - p.kappa) / spread;
      const double jacobian = (price - p.chi * u.curvature(c) / price) / spread;
      density[k] += 0.5 * normal_pdf(t) * jacobian;
    }
  }
  return density;
}

double consumption_cdf(const SaddleSolution& solution, double c) {
  if (!(c > 0.0)) return 0.0;
  const OrderParameters& p = solution.params;
  const Crra u{solution.crra_exponent};
  const double spread = std::sqrt(solution.n * p.big_g);
  const double prices[2] = {1.0 - solution.price_spread, 1.0 + solution.price_spread};
  double total = 0.0;
  for (double price : prices) {
    const double gap = p.chi * u.marginal(c) / price - c * price + 1.0 - p.kappa;
    if (spread > 1e-300)
      total += 0.5 * normal_cdf(-gap / spread);
    else
      total += gap <= 0.0 ? 0.5 : 0.0;  // atom at c*(t = 0, p)
  }
  return total;
}

double consumption_quantile(const SaddleSolution& solution, double probability) {
  if (!(probability > 0.0 && probability < 1.0))
    throw DomainError("quantile probability must lie in (0, 1)");
  const auto g = [&](double y) { return consumption_cdf(solution, std::exp(y)) - probability; };
  double lo = -1.0, hi = 1.0;
  for (int k = 0; k < 200 && g(lo) > 0.0; ++k) lo -= 1.0 + std::abs(lo);
  for (int k = 0; k < 200 && g(hi) < 0.0; ++k) hi += 1.0 + std::abs(hi);
  // Plain bisection: the CDF may be a step function in the atomic limit.
  for (int k = 0; k < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo)); ++k) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

std::vector<SweepPoint> sweep(const std::vector<double>& n_values, double epsilon,
                              const SaddleOptions& options) {
  if (!std::is_sorted(n_values.begin(), n_values.end()))
    throw ConfigError("sweep n values must be ascending");
  SaddleOptions inner = options;
  double n_limit = std::numeric_limits<double>::infinity();
  if (epsilon < 0.0 && options.check_domain) {
    n_limit = critical_point(epsilon).n_critical;
    inner.check_domain = false;
  }

  std::vector<SweepPoint> out;
  std::optional<OrderParameters> previous;
  for (double n : n_values) {
    SweepPoint point;
    point.n = n;
    try {
      if (!(n < n_limit)) throw DomainError("(n, epsilon) lies in the arbitrage region");
      try {
        point.solution = solve_order_parameters(n, epsilon, inner, previous);
      } catch (const NumericalError&) {
        if (!previous) throw;
        point.solution = solve_order_parameters(n, epsilon, inner);
      }
      previous = point.solution->params;
    } catch (const Error& e) {
      point.error = e.what();
    }
    const bool stop = point.solution && point.solution->at_boundary;
    out.push_back(std::move(point));
    if (stop) break;
  }
  return out;
}

nlohmann::json to_json(const SaddleSolution& s) {
  nlohmann::json doc;
  doc["schema"] = "randecon.saddle/1";
  doc["n"] = s.n;
  doc["epsilon"] = s.epsilon;
  doc["crra_exponent"] = s.crra_exponent;
  doc["price_spread"] = s.price_spread;
  doc["params"] = {{"lambda", s.params.lambda}, {"nu", s.params.nu},
                   {"sigma", s.params.sigma},   {"G", s.params.big_g},
                   {"chi", s.params.chi},       {"kappa", s.params.kappa}};
  doc["completeness"] = s.completeness;
  doc["emm_distance"] = s.emm_distance;
  doc["revenue"] = s.revenue;
  doc["volume"] = s.volume;
  doc["mean_z"] = s.mean_z;
  doc["utility"] = s.utility;
  doc["residuals"] = s.residuals;
  doc["residual"] = s.residual;
  doc["budget_identity"] = s.budget_identity;
  doc["no_arbitrage_identity"] = s.no_arbitrage_identity;
  doc["iterations"] = s.iterations;
  doc["converged"] = s.converged;
  doc["at_boundary"] = s.at_boundary;
  return doc;
}

}  // namespace randecon
