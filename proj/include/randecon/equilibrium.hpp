#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "randecon/economy.hpp"
#include "randecon/utility.hpp"

namespace randecon {

struct EquilibriumSolution {
  Eigen::VectorXd z;            // optimal portfolio, z_i >= 0
  Eigen::VectorXd consumption;  // c^w = (1 + sum_i z_i r_i^w) / p^w
  Eigen::VectorXd emm;          // q^w
  double emm_norm = 0.0;        // Q = E_pi[u'(c)/p]
  double revenue = 0.0;         // R = (eps/Omega) sum_i z_i
  double sigma_q = 0.0;         // sqrt(Omega sum_w (q^w - pi^w)^2)
  double completeness = 0.0;    // phi = |{i : z_i traded}| / Omega
  double susceptibility = 0.0;  // chi, see susceptibility_finite
  double hessian_condition = 0.0;
  double utility = 0.0;         // E_pi[u(c)] at the optimum
  double kkt_residual = 0.0;    // max over traded i of |dE_pi[u]/dz_i|
  int iterations = 0;

  std::vector<int> traded() const;
};

struct ArbitrageReport {
  bool has_arbitrage = false;
  std::optional<std::vector<double>> witness;  // zeta >= 0, sum zeta = 1
  double min_state_payoff = 0.0;  // max over the simplex of min_w sum_i zeta_i r_i^w
  double max_state_payoff = 0.0;  // at the maximizing portfolio
};

struct SolverOptions {
  double crra_exponent = 0.5;
  // Linear tilt h added to the total utility sum_w u(c^w) + h . z; used for
  // susceptibility oracles. Empty means zero.
  Eigen::VectorXd tilt;
  int max_iterations = 500;
  double gradient_tolerance = 1e-12;  // on the E_pi-scaled projected gradient
  // Portfolio norm beyond which the problem is declared unbounded.
  double divergence_cap = 1e7;
  bool check_arbitrage = true;
  bool compute_susceptibility = true;
};

// Portfolio entries above this count as traded.
double traded_threshold(const Eigen::VectorXd& z);

// Maximizes E_pi[u(c)] over z >= 0 with a projected Newton method.
// Throws UnboundedError (with witness) when arbitrage is present and
// NumericalError when the iteration budget runs out.
EquilibriumSolution solve_consumer(const Economy& economy, const SolverOptions& options = {});

// chi = (1/Omega) trace of the inverse of the negated Hessian of
// sum_w u(c^w), restricted to the traded assets. This is the response
// (1/Omega) sum_i dz_i/dh_i to the tilt sum_w u + h.z, the normalization in
// which chi is intensive and matches the saddle-point order parameter.
// Throws IllConditionedError if the restricted Hessian is singular.
struct SusceptibilityResult {
  double chi = 0.0;
  double condition = 0.0;
};
SusceptibilityResult susceptibility_finite(const Economy& economy,
                                           const EquilibriumSolution& solution,
                                           double crra_exponent = 0.5);

// Decides whether a non-negative portfolio with non-negative payoff in every
// state and a positive payoff somewhere exists, by maximizing the minimum
// state payoff over the unit simplex of portfolios.
ArbitrageReport detect_arbitrage(const Economy& economy, double tolerance = 1e-9);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  int count = 0;
};

struct Histogram {
  std::vector<double> edges;    // bins + 1
  std::vector<double> density;  // normalized to unit area
};

struct EnsembleStatistics {
  ModelConfig config;
  int samples = 0;
  int arbitrage_count = 0;
  int failure_count = 0;
  Estimate completeness;
  Estimate sigma_q;
  Estimate revenue;
  Estimate susceptibility;
  Histogram consumption;
};

struct EnsembleOptions {
  int histogram_bins = 60;
  int threads = 0;  // 0: RANDECON_THREADS or hardware concurrency
  bool compute_susceptibility = true;
};

// Solves `samples` independent economies (seed derived from config.seed and
// the sample index). Arbitrage samples are counted and excluded.
EnsembleStatistics ensemble_statistics(const ModelConfig& config, int samples,
                                       const EnsembleOptions& options = {});

nlohmann::json to_json(const EquilibriumSolution& solution);

}  // namespace randecon
