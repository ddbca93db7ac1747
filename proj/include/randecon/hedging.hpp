#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "randecon/economy.hpp"
#include "randecon/equilibrium.hpp"
#include "randecon/saddlepoint.hpp"

namespace randecon {

struct HedgeSolution {
  Eigen::VectorXd weights;    // w_i on the traded assets, in the order given
  std::vector<int> traded;
  double residual_risk = 0.0;     // min pi-variance of -r_new + sum w_i r_i
  double interbank_volume = 0.0;  // g = sum w_i^2
  double net_position = 0.0;      // sum w_i
  // (1/Omega) trace of the weight response to a linear field on the bank's
  // objective (gamma Omega / 2) Sigma^2 + eps sum w.
  double susceptibility = 0.0;
};

struct HedgeOptions {
  double bank_risk_aversion = 0.1;
  // Without the zero-net constraint the bank maximizes its mean-variance
  // utility directly; this needs epsilon.
  bool zero_net = true;
  double epsilon = 0.0;
};

// Minimum-variance hedge of `new_asset` with the assets in `traded`.
// Throws DomainError for fewer than two assets with the zero-net constraint
// and RankDeficiencyError when the traded covariance is singular.
HedgeSolution min_variance_hedge(const Economy& economy, const std::vector<int>& traded,
                                 const Eigen::VectorXd& new_asset,
                                 const HedgeOptions& options = {});

// eps = gamma (1 - phi) / 2.
double analytic_premium(double phi, double bank_risk_aversion);

struct InterbankAnalytic {
  double g = 0.0;      // phi / (1 - phi)
  double chi_w = 0.0;  // phi / (gamma (1 - phi))
};
InterbankAnalytic analytic_interbank(double phi, double bank_risk_aversion);

enum class TradedSelection {
  consumer,  // traded set of a consumer equilibrium at the configured (n, eps)
  unbiased,  // round(phi Omega) independent assets
};

struct HedgeEnsembleOptions {
  TradedSelection selection = TradedSelection::unbiased;
  double target_phi = 0.5;  // unbiased mode only
  double bank_risk_aversion = 0.1;
  int threads = 0;
};

struct HedgeEnsemble {
  int samples = 0;
  int failures = 0;
  Estimate completeness;      // K / Omega
  Estimate interbank_volume;  // g
  Estimate susceptibility;    // chi_w
  Estimate scaled_risk;       // Omega Sigma^2
  Estimate implied_premium;   // gamma Omega Sigma^2
};

HedgeEnsemble hedge_ensemble(const ModelConfig& config, int samples,
                             const HedgeEnsembleOptions& options = {});

struct TrajectoryPoint {
  double n = 0.0;
  double epsilon_endogenous = 0.0;
  double completeness = 0.0;
  double chi_consumer = 0.0;
  double volume_consumer = 0.0;
  double interbank_volume = 0.0;
  double chi_interbank = 0.0;
  double bank_risk_aversion = 0.0;
  double fixed_point_residual = 0.0;  // |eps - gamma (1 - phi) / 2|
  bool converged = false;
  bool at_boundary = false;
  std::string error;
  std::vector<double> trace;  // eps iterates
};

struct TrajectoryOptions {
  SaddleOptions saddle;
  double tolerance = 1e-8;
  // When the fixed point collapses onto eps = 0 between grid points, bisect
  // in n until phi reaches refine_completeness.
  double refine_completeness = 0.999;
  int max_refinements = 40;
};

// At each n solves eps = gamma (1 - phi(n, eps)) / 2 by bracketed root
// finding on (0, gamma/2], warm-started from the previous point. Stops after
// the first point with phi > 1 - 1e-4. Past a finite n no positive fixed
// point exists; the grid is then refined towards that n and the last entry
// has at_boundary set, eps = 0 and a non-empty error.
std::vector<TrajectoryPoint> endogenous_trajectory(const std::vector<double>& n_values,
                                                   double bank_risk_aversion,
                                                   const TrajectoryOptions& options = {});

nlohmann::json to_json(const HedgeSolution& solution);

}  // namespace randecon
