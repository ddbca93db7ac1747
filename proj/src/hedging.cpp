#include "randecon/hedging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>

#include <boost/math/tools/roots.hpp>

#include "randecon/error.hpp"
#include "randecon/parallel.hpp"
#include "randecon/rng.hpp"

namespace randecon {

namespace {

void check_phi(double phi) {
  if (!(phi >= 0.0 && phi < 1.0)) throw DomainError("completeness must lie in [0, 1)");
}

Estimate summarize(const std::vector<double>& values) {
  Estimate e;
  e.count = static_cast<int>(values.size());
  if (values.empty()) return e;
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / e.count;
  if (e.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.std_error = std::sqrt(ss / (e.count - 1) / e.count);
  }
  return e;
}

}  // namespace

HedgeSolution min_variance_hedge(const Economy& economy, const std::vector<int>& traded,
                                 const Eigen::VectorXd& new_asset, const HedgeOptions& options) {
  const int k = static_cast<int>(traded.size());
  const int omega = economy.states();
  if (new_asset.size() != omega) throw ConfigError("new asset must have one return per state");
  if (options.zero_net && k < 2)
    throw DomainError("a zero-net hedge needs at least two traded assets");
  if (k < 1) throw DomainError("a hedge needs at least one traded asset");
  std::vector<int> sorted = traded;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.front() < 0 ||
      sorted.back() >= economy.assets())
    throw ConfigError("traded indices must be distinct and in range");
  if (!(options.bank_risk_aversion > 0.0)) throw ConfigError("bank risk aversion must be positive");

  const Eigen::VectorXd& pi = economy.probabilities;
  Eigen::MatrixXd dev(k, omega);
  for (int a = 0; a < k; ++a) {
    const Eigen::RowVectorXd row = economy.returns.row(traded[a]);
    dev.row(a) = row.array() - row.dot(pi);
  }
  const Eigen::VectorXd target = new_asset.array() - new_asset.dot(pi);

  const Eigen::MatrixXd weighted = dev * pi.asDiagonal();
  const Eigen::MatrixXd cov = weighted * dev.transpose();
  const Eigen::VectorXd cross = weighted * target;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  const int null_dimension =
      static_cast<int>((eig.eigenvalues().array() <= 1e-12 * std::max(top, 1e-300)).count());
  if (null_dimension > 0)
    throw RankDeficiencyError("traded covariance is singular", null_dimension);

  const double gamma = options.bank_risk_aversion;
  HedgeSolution out;
  out.traded = traded;
  if (options.zero_net) {
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
    kkt.topLeftCorner(k, k) = cov;
    kkt.col(k).head(k).setOnes();
    kkt.row(k).head(k).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
    rhs.head(k) = cross;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
    out.weights = lu.solve(rhs).head(k);

    Eigen::MatrixXd response = kkt;
    response.topLeftCorner(k, k) *= gamma * omega;
    out.susceptibility =
        Eigen::PartialPivLU<Eigen::MatrixXd>(response).inverse().topLeftCorner(k, k).trace() /
        omega;
  } else {
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::VectorXd shift =
        Eigen::VectorXd::Constant(k, options.epsilon / (gamma * omega));
    out.weights = llt.solve(cross - shift);
    out.susceptibility =
        llt.solve(Eigen::MatrixXd::Identity(k, k)).trace() / (gamma * omega) / omega;
  }

  const Eigen::VectorXd residual = dev.transpose() * out.weights - target;
  out.residual_risk = residual.cwiseProduct(residual).dot(pi);
  out.interbank_volume = out.weights.squaredNorm();
  out.net_position = out.weights.sum();
  return out;
}

double analytic_premium(double phi, double bank_risk_aversion) {
  check_phi(phi);
  return bank_risk_aversion * (1.0 - phi) / 2.0;
}

InterbankAnalytic analytic_interbank(double phi, double bank_risk_aversion) {
  check_phi(phi);
  if (!(bank_risk_aversion > 0.0)) throw DomainError("bank risk aversion must be positive");
  return {phi / (1.0 - phi), phi / (bank_risk_aversion * (1.0 - phi))};
}

HedgeEnsemble hedge_ensemble(const ModelConfig& config, int samples,
                             const HedgeEnsembleOptions& options) {
  config.validate();
  if (samples < 2) throw ConfigError("hedge_ensemble needs at least two samples");

  struct Sample {
    bool ok = false;
    double completeness = 0.0, g = 0.0, chi = 0.0, risk = 0.0;
  };
  std::vector<Sample> results(static_cast<std::size_t>(samples));
  parallel_for(samples, options.threads, [&](int s) {
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(s));
    ModelConfig local = config;
    local.seed = seed;
    std::vector<int> traded;
    Economy economy;
    if (options.selection == TradedSelection::unbiased) {
      local.n_ratio = options.target_phi;
      economy = sample_economy(local);
      traded.resize(static_cast<std::size_t>(economy.assets()));
      std::iota(traded.begin(), traded.end(), 0);
    } else {
      economy = sample_economy(local);
      SolverOptions solver;
      solver.crra_exponent = config.crra_exponent;
      solver.compute_susceptibility = false;
      try {
        traded = solve_consumer(economy, solver).traded();
      } catch (const Error&) {
        return;
      }
    }
    const Eigen::VectorXd fresh =
        sample_asset(economy.states(), economy.epsilon, derive_seed(seed, 0x6e6577));
    HedgeOptions hedge;
    hedge.bank_risk_aversion = options.bank_risk_aversion;
    try {
      const HedgeSolution h = min_variance_hedge(economy, traded, fresh, hedge);
      Sample& out = results[static_cast<std::size_t>(s)];
      out.ok = true;
      out.completeness = static_cast<double>(traded.size()) / economy.states();
      out.g = h.interbank_volume;
      out.chi = h.susceptibility;
      out.risk = h.residual_risk * economy.states();
    } catch (const Error&) {
    }
  });

  HedgeEnsemble ens;
  ens.samples = samples;
  std::vector<double> phi, g, chi, risk, premium;
  for (const Sample& s : results) {
    if (!s.ok) {
      ++ens.failures;
      continue;
    }
    phi.push_back(s.completeness);
    g.push_back(s.g);
    chi.push_back(s.chi);
    risk.push_back(s.risk);
    premium.push_back(options.bank_risk_aversion * s.risk);
  }
  if (phi.empty()) throw EmptyStatisticsError("no hedge sample succeeded");
  ens.completeness = summarize(phi);
  ens.interbank_volume = summarize(g);
  ens.susceptibility = summarize(chi);
  ens.scaled_risk = summarize(risk);
  ens.implied_premium = summarize(premium);
  return ens;
}

namespace {

struct TrajectoryState {
  std::optional<OrderParameters> warm;
  double upper = 0.0;  // bracket top, the previous endogenous eps
};

// One fixed point at n. `terminated` is set when F > 0 persists down to eps
// where phi > 1 - 1e-4: the fixed point has collapsed onto eps = 0.
TrajectoryPoint trajectory_point(double n, double gamma, const TrajectoryOptions& options,
                                 TrajectoryState& state, bool& terminated) {
  TrajectoryPoint point;
  point.n = n;
  point.bank_risk_aversion = gamma;
  terminated = false;
  std::optional<OrderParameters> warm = state.warm;
  std::optional<SaddleSolution> last;
  // F(eps) = eps - gamma (1 - phi(n, eps)) / 2 is increasing in eps.
  const auto gap = [&](double eps) {
    SaddleSolution sol;
    try {
      sol = solve_order_parameters(n, eps, options.saddle, warm);
    } catch (const NumericalError&) {
      sol = solve_order_parameters(n, eps, options.saddle);
    }
    warm = sol.params;
    last = sol;
    point.trace.push_back(eps);
    return eps - gamma * (1.0 - sol.completeness) / 2.0;
  };
  const auto record = [&](const SaddleSolution& sol) {
    point.completeness = sol.completeness;
    point.chi_consumer = sol.params.chi;
    point.volume_consumer = sol.volume;
    const InterbankAnalytic bank = analytic_interbank(sol.completeness, gamma);
    point.interbank_volume = bank.g;
    point.chi_interbank = bank.chi_w;
  };
  try {
    double hi = state.upper;
    double f_hi = gap(hi);
    while (f_hi < 0.0 && hi < gamma / 2.0) f_hi = gap(hi = std::min(gamma / 2.0, 2.0 * hi));
    double lo = 0.5 * hi;
    double f_lo = gap(lo);
    while (f_lo > 0.0) {
      if (last->at_boundary) {
        record(*last);
        point.epsilon_endogenous = 0.0;
        point.fixed_point_residual = f_lo;
        point.at_boundary = true;
        point.error = "no positive premium fixed point; trajectory is on the complete-market line";
        terminated = true;
        return point;
      }
      hi = lo;
      f_hi = f_lo;
      f_lo = gap(lo *= 0.5);
    }
    if (!(f_hi >= 0.0))
      throw NumericalError("premium fixed point not bracketed", -f_hi, point.trace);

    double eps = f_lo == 0.0 ? lo : hi;
    if (f_lo != 0.0 && f_hi != 0.0) {
      std::uintmax_t iterations = 100;
      const auto [a, b] = boost::math::tools::toms748_solve(
          gap, lo, hi, f_lo, f_hi,
          [&](double x, double y) { return std::abs(x - y) < 0.1 * options.tolerance; },
          iterations);
      eps = 0.5 * (a + b);
    }
    const double residual = std::abs(gap(eps));
    record(*last);
    point.epsilon_endogenous = eps;
    point.fixed_point_residual = residual;
    point.converged = residual < options.tolerance && last->converged;
    point.at_boundary = last->at_boundary;
    state.warm = last->params;
    state.upper = eps;
  } catch (const Error& e) {
    point.error = e.what();
  }
  return point;
}

}  // namespace

std::vector<TrajectoryPoint> endogenous_trajectory(const std::vector<double>& n_values,
                                                   double bank_risk_aversion,
                                                   const TrajectoryOptions& options) {
  if (!std::is_sorted(n_values.begin(), n_values.end()))
    throw ConfigError("trajectory n values must be ascending");
  if (!(bank_risk_aversion > 0.0)) throw ConfigError("bank risk aversion must be positive");
  const double gamma = bank_risk_aversion;

  std::vector<TrajectoryPoint> out;
  TrajectoryState state;
  state.upper = gamma / 2.0;
  for (double n : n_values) {
    bool terminated = false;
    const TrajectoryState before = state;
    TrajectoryPoint point = trajectory_point(n, gamma, options, state, terminated);
    if (!terminated) {
      const bool stop = point.at_boundary;
      out.push_back(std::move(point));
      if (stop) break;
      continue;
    }

    // Bisect in n towards the end point of the trajectory.
    double n_lo = out.empty() ? 0.0 : out.back().n;
    double n_hi = n;
    bool have_lo = !out.empty() && out.back().converged;
    TrajectoryPoint end = std::move(point);
    state = before;
    for (int k = 0; have_lo && k < options.max_refinements; ++k) {
      if (out.back().completeness >= options.refine_completeness) break;
      const double mid = 0.5 * (n_lo + n_hi);
      TrajectoryState trial = state;
      bool mid_terminated = false;
      TrajectoryPoint inner = trajectory_point(mid, gamma, options, trial, mid_terminated);
      if (mid_terminated) {
        n_hi = mid;
        end = std::move(inner);
      } else if (inner.converged) {
        n_lo = mid;
        state = trial;
        out.push_back(std::move(inner));
      } else {
        break;
      }
    }
    out.push_back(std::move(end));
    break;
  }
  return out;
}

nlohmann::json to_json(const HedgeSolution& h) {
  nlohmann::json doc;
  doc["schema"] = "randecon.hedge/1";
  doc["weights"] = std::vector<double>(h.weights.data(), h.weights.data() + h.weights.size());
  doc["traded"] = h.traded;
  doc["residual_risk"] = h.residual_risk;
  doc["interbank_volume"] = h.interbank_volume;
  doc["net_position"] = h.net_position;
  doc["susceptibility"] = h.susceptibility;
  return doc;
}

}  // namespace randecon
