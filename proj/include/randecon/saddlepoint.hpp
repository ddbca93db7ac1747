#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "randecon/gaussian.hpp"

namespace randecon {

// The six order parameters of the large-economy limit.
struct OrderParameters {
  double lambda = 0.0;  // <u'(c*)/p>
  double nu = 0.0;
  double sigma = 0.0;   // std of u'(c*)/p
  double big_g = 0.0;   // <z*^2>
  double chi = 0.0;
  double kappa = 0.0;
};

struct SaddleOptions {
  double crra_exponent = 0.5;
  double price_spread = 0.2;
  int quadrature_order = 64;
  double tolerance = 1e-9;  // on every scaled equation residual
  int max_iterations = 100;
  // Damped fixed-point sweeps run before Newton (0 disables).
  int warmup_iterations = 0;
  // For eps < 0, reject (n, eps) outside the arbitrage-free region.
  bool check_domain = true;
};

struct SaddleSolution {
  OrderParameters params;
  double n = 0.0;
  double epsilon = 0.0;
  double completeness = 0.0;  // phi = chi nu
  double emm_distance = 0.0;  // sigma / lambda
  double revenue = 0.0;       // eps n <z*>
  double volume = 0.0;        // n <z*>
  double mean_z = 0.0;        // <z*>
  double utility = 0.0;       // psi at the saddle point
  // Scaled residuals |new - old| / max(1, |old|) of the six equations in the
  // order lambda, nu, sigma, G, chi, kappa.
  std::array<double, 6> residuals{};
  double residual = 0.0;      // max of residuals
  double budget_identity = 0.0;        // <c* p> + eps n <z*> - 1
  double no_arbitrage_identity = 0.0;  // <(u'/p)(c* p - 1)>
  int iterations = 0;
  bool converged = false;
  bool at_boundary = false;   // phi > 1 - 1e-4
  double crra_exponent = 0.5;
  double price_spread = 0.2;
};

// z*(t) = max(0, (sigma t - eps lambda) / nu).
double z_star(double t, const OrderParameters& params, double epsilon);

// Unique c > 0 solving chi u'(c)/p = c p - 1 + kappa + sqrt(n G) t.
// Throws NumericalError when the root cannot be bracketed.
double c_star(double t, double p, const OrderParameters& params, double n,
              double crra_exponent = 0.5);

// Closed-form <z*>, <z*^2>, <z* t> over standard Gaussian t.
struct PortfolioMoments {
  double mean = 0.0;
  double second = 0.0;
  double cross = 0.0;
  double traded_fraction = 0.0;  // Prob{z* > 0}
};
PortfolioMoments portfolio_moments(const OrderParameters& params, double epsilon);

// Solves the stationarity system. `initial` seeds the iteration (continuation);
// without it the solver starts from a fixed default and, if that fails, walks
// in n from a small value. Throws DomainError outside the arbitrage-free
// region and NumericalError (with residual trace) on non-convergence.
SaddleSolution solve_order_parameters(double n, double epsilon, const SaddleOptions& options = {},
                                      const std::optional<OrderParameters>& initial = std::nullopt);

// Consumption density, CDF and quantile under Gaussian t and the two prices.
// When n G vanishes the law is two atoms and the density is zero everywhere.
std::vector<double> consumption_density(const SaddleSolution& solution,
                                        const std::vector<double>& grid);
double consumption_cdf(const SaddleSolution& solution, double c);
double consumption_quantile(const SaddleSolution& solution, double probability);

struct SweepPoint {
  double n = 0.0;
  std::optional<SaddleSolution> solution;
  std::string error;  // set when solution is empty
};

// Solves along ascending n with continuation. Failures are recorded per point.
// Stops after the first point with phi > 1 - 1e-4.
std::vector<SweepPoint> sweep(const std::vector<double>& n_values, double epsilon,
                              const SaddleOptions& options = {});

nlohmann::json to_json(const SaddleSolution& solution);

}  // namespace randecon
