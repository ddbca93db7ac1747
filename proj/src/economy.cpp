#include "randecon/economy.hpp"

#include <cmath>

#include "randecon/error.hpp"
#include "randecon/rng.hpp"

namespace randecon {

int ModelConfig::asset_count() const {
  return static_cast<int>(std::lround(n_ratio * omega_count));
}

void ModelConfig::validate() const {
  if (omega_count < 2) throw ConfigError("omega_count must be >= 2");
  if (!(n_ratio > 0.0) || !std::isfinite(n_ratio))
    throw ConfigError("n_ratio must be a positive finite number");
  if (asset_count() < 1) throw ConfigError("n_ratio * omega_count rounds to zero assets");
  if (!std::isfinite(epsilon)) throw ConfigError("epsilon must be finite");
  if (!(crra_exponent > 0.0 && crra_exponent < 1.0))
    throw ConfigError("crra_exponent must lie in (0, 1)");
  if (!(price_spread >= 0.0 && price_spread < 1.0))
    throw ConfigError("price_spread must lie in [0, 1)");
}

namespace {

void fill_row(Rng& rng, double epsilon, Eigen::Ref<Eigen::VectorXd> row,
              const Eigen::VectorXd& probabilities) {
  const int omega = static_cast<int>(row.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(omega));
  for (int w = 0; w < omega; ++w) row(w) = scale * rng.normal();
  const double shift = probabilities.dot(row) + epsilon / omega;
  row.array() -= shift;
}

}  // namespace

Economy sample_economy(const ModelConfig& config) {
  config.validate();
  const int omega = config.omega_count;
  const int assets = config.asset_count();

  Economy economy;
  economy.epsilon = config.epsilon;
  economy.price_spread = config.price_spread;
  economy.seed = config.seed;
  economy.probabilities = Eigen::VectorXd::Constant(omega, 1.0 / omega);
  economy.returns.resize(assets, omega);
  economy.prices.resize(omega);

  Rng rng(config.seed);
  Eigen::VectorXd row(omega);
  for (int i = 0; i < assets; ++i) {
    fill_row(rng, config.epsilon, row, economy.probabilities);
    economy.returns.row(i) = row.transpose();
  }
  for (int w = 0; w < omega; ++w)
    economy.prices(w) = rng.coin() ? 1.0 + config.price_spread : 1.0 - config.price_spread;
  return economy;
}

Eigen::VectorXd sample_asset(int omega_count, double epsilon, std::uint64_t seed) {
  if (omega_count < 2) throw ConfigError("omega_count must be >= 2");
  Rng rng(seed);
  Eigen::VectorXd row(omega_count);
  fill_row(rng, epsilon, row, Eigen::VectorXd::Constant(omega_count, 1.0 / omega_count));
  return row;
}

nlohmann::json to_json(const Economy& economy) {
  nlohmann::json doc;
  doc["schema"] = "randecon.economy/1";
  doc["generator"] = std::string(Rng::kName);
  doc["seed"] = economy.seed;
  doc["assets"] = economy.assets();
  doc["states"] = economy.states();
  doc["epsilon"] = economy.epsilon;
  doc["price_spread"] = economy.price_spread;
  doc["layout"] = "row-major";
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(economy.returns.size()));
  for (int i = 0; i < economy.assets(); ++i)
    for (int w = 0; w < economy.states(); ++w) returns.push_back(economy.returns(i, w));
  doc["returns"] = std::move(returns);
  doc["prices"] = std::vector<double>(economy.prices.data(),
                                      economy.prices.data() + economy.prices.size());
  doc["probabilities"] = std::vector<double>(
      economy.probabilities.data(),
      economy.probabilities.data() + economy.probabilities.size());
  return doc;
}

}  // namespace randecon
