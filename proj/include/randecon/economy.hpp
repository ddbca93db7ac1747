#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "json.hpp"

namespace randecon {

// Parameters of the random-economy ensemble.
struct ModelConfig {
  double n_ratio = 0.5;        // financial complexity N / Omega
  double epsilon = 0.05;       // risk premium
  int omega_count = 200;       // number of states
  double crra_exponent = 0.5;  // consumer utility exponent
  double price_spread = 0.2;   // commodity prices are 1 +- spread
  std::uint64_t seed = 1;

  // Number of assets, round(n_ratio * omega_count).
  int asset_count() const;
  // Throws ConfigError when a field is out of range.
  void validate() const;
};

// One sampled realization. Immutable after construction.
struct Economy {
  Eigen::MatrixXd returns;        // N x Omega, r_i^w
  Eigen::VectorXd prices;         // Omega, p^w in {1 - spread, 1 + spread}
  Eigen::VectorXd probabilities;  // Omega, uniform
  double epsilon = 0.0;
  double price_spread = 0.0;
  std::uint64_t seed = 0;

  int assets() const { return static_cast<int>(returns.rows()); }
  int states() const { return static_cast<int>(returns.cols()); }
};

// Draws returns i.i.d. N(0, 1/Omega), then shifts every row so that its
// probability-weighted mean is exactly -epsilon/Omega. Prices are 1 +- spread
// with equal probability. Deterministic in config.seed.
Economy sample_economy(const ModelConfig& config);

// Draws one extra asset row from the same ensemble (used as a new instrument
// to hedge). `seed` selects an independent stream.
Eigen::VectorXd sample_asset(int omega_count, double epsilon, std::uint64_t seed);

nlohmann::json to_json(const Economy& economy);

}  // namespace randecon
