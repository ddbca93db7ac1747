#include "randecon/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "randecon/error.hpp"
#include "randecon/matrix_game.hpp"
#include "randecon/parallel.hpp"
#include "randecon/rng.hpp"

namespace randecon {

std::vector<int> EquilibriumSolution::traded() const {
  std::vector<int> out;
  const double threshold = traded_threshold(z);
  for (int i = 0; i < z.size(); ++i)
    if (z(i) > threshold) out.push_back(i);
  return out;
}

double traded_threshold(const Eigen::VectorXd& z) {
  const double norm = z.size() == 0 ? 0.0 : z.cwiseAbs().maxCoeff();
  return 1e-8 * std::max(1.0, norm);
}

namespace {

// Objective pieces at a portfolio, E_pi-scaled.
struct Evaluation {
  Eigen::VectorXd wealth;      // 1 + R^T z
  Eigen::VectorXd marginal;    // pi u'(c) / p
  Eigen::VectorXd curvature;   // pi u''(c) / p^2
  Eigen::VectorXd gradient;    // R marginal + tilt / Omega
  double value = 0.0;
};

class ConsumerProblem {
 public:
  ConsumerProblem(const Economy& economy, const SolverOptions& options)
      : economy_(economy), utility_{options.crra_exponent}, options_(options) {
    if (options.tilt.size() != 0 && options.tilt.size() != economy.assets())
      throw ConfigError("solver tilt must have one entry per asset");
  }

  bool feasible(const Eigen::VectorXd& wealth) const { return wealth.minCoeff() > 0.0; }

  Eigen::VectorXd wealth(const Eigen::VectorXd& z) const {
    return Eigen::VectorXd::Ones(economy_.states()) + economy_.returns.transpose() * z;
  }

  // Objective only; -inf if some state has non-positive wealth.
  double value(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd w = wealth(z);
    if (!feasible(w)) return -std::numeric_limits<double>::infinity();
    return value_from_wealth(z, w);
  }

  Evaluation evaluate(const Eigen::VectorXd& z) const {
    Evaluation e;
    e.wealth = wealth(z);
    const int omega = economy_.states();
    e.marginal.resize(omega);
    e.curvature.resize(omega);
    for (int w = 0; w < omega; ++w) {
      const double p = economy_.prices(w);
      const double c = e.wealth(w) / p;
      const double pi = economy_.probabilities(w);
      e.marginal(w) = pi * utility_.marginal(c) / p;
      e.curvature(w) = pi * utility_.curvature(c) / (p * p);
    }
    e.gradient = economy_.returns * e.marginal;
    if (options_.tilt.size() != 0) e.gradient += options_.tilt / omega;
    e.value = value_from_wealth(z, e.wealth);
    return e;
  }

  // -Hessian restricted to `index`, E_pi-scaled.
  Eigen::MatrixXd negated_hessian(const std::vector<int>& index,
                                  const Eigen::VectorXd& curvature) const {
    const int k = static_cast<int>(index.size());
    Eigen::MatrixXd rows(k, economy_.states());
    for (int a = 0; a < k; ++a) rows.row(a) = economy_.returns.row(index[a]);
    Eigen::MatrixXd scaled = rows * (-curvature).asDiagonal();
    Eigen::MatrixXd h(k, k);
    h.triangularView<Eigen::Lower>() = scaled * rows.transpose();
    return h.selfadjointView<Eigen::Lower>();
  }

  const Economy& economy() const { return economy_; }
  const Crra& utility() const { return utility_; }

 private:
  double value_from_wealth(const Eigen::VectorXd& z, const Eigen::VectorXd& w) const {
    double total = 0.0;
    for (int s = 0; s < economy_.states(); ++s)
      total += economy_.probabilities(s) * utility_.value(w(s) / economy_.prices(s));
    if (options_.tilt.size() != 0) total += options_.tilt.dot(z) / economy_.states();
    return total;
  }

  const Economy& economy_;
  Crra utility_;
  const SolverOptions& options_;
};

double kkt_measure(const Eigen::VectorXd& z, const Eigen::VectorXd& g) {
  double worst = 0.0;
  for (int i = 0; i < z.size(); ++i)
    worst = std::max(worst, z(i) > 0.0 ? std::abs(g(i)) : std::max(g(i), 0.0));
  return worst;
}

// Solves (A + mu I) x = b for symmetric positive semi-definite A, raising mu
// until the Cholesky factorization succeeds.
Eigen::VectorXd regularized_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const int k = static_cast<int>(a.rows());
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  double mu = 0.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(a + mu * Eigen::MatrixXd::Identity(k, k));
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd x = llt.solve(b);
      if (x.allFinite()) return x;
    }
    mu = mu == 0.0 ? 1e-14 * scale : mu * 100.0;
  }
  return b / scale;
}

}  // namespace

EquilibriumSolution solve_consumer(const Economy& economy, const SolverOptions& options) {
  if (options.check_arbitrage) {
    ArbitrageReport report = detect_arbitrage(economy);
    if (report.has_arbitrage)
      throw UnboundedError("economy admits arbitrage; consumer problem is unbounded",
                           report.witness.value_or(std::vector<double>{}));
  }

  ConsumerProblem problem(economy, options);
  const int assets = economy.assets();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(assets);
  Evaluation eval = problem.evaluate(z);
  std::vector<double> trace;

  int iteration = 0;
  double residual = kkt_measure(z, eval.gradient);
  for (; iteration < options.max_iterations && residual > options.gradient_tolerance;
       ++iteration) {
    trace.push_back(residual);

    // Diagonal of -H for scaling the bound-constrained coordinates.
    Eigen::VectorXd diag(assets);
    for (int i = 0; i < assets; ++i)
      diag(i) = std::max(-(economy.returns.row(i).array().square() *
                           eval.curvature.transpose().array())
                              .sum(),
                         1e-300);

    // Bertsekas' epsilon-active set: near-zero coordinates with a descent
    // direction into the bound are moved by a scaled gradient step only.
    double proj = 0.0;
    for (int i = 0; i < assets; ++i)
      proj = std::max(proj, std::abs(z(i) - std::max(0.0, z(i) + eval.gradient(i) / diag(i))));
    const double delta = std::min(1e-2 * std::max(1.0, z.maxCoeff()), proj);

    std::vector<int> free;
    std::vector<int> bound;
    for (int i = 0; i < assets; ++i) {
      if (z(i) <= delta && eval.gradient(i) <= 0.0)
        bound.push_back(i);
      else
        free.push_back(i);
    }

    Eigen::VectorXd direction = Eigen::VectorXd::Zero(assets);
    for (int i : bound) direction(i) = eval.gradient(i) / diag(i);
    if (!free.empty()) {
      const Eigen::MatrixXd h = problem.negated_hessian(free, eval.curvature);
      Eigen::VectorXd g(static_cast<int>(free.size()));
      for (std::size_t a = 0; a < free.size(); ++a) g(static_cast<int>(a)) = eval.gradient(free[a]);
      const Eigen::VectorXd step = regularized_solve(h, g);
      for (std::size_t a = 0; a < free.size(); ++a) direction(free[a]) = step(static_cast<int>(a));
    }

    // Projected Armijo backtracking that keeps every state's wealth positive.
    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    // Below this predicted gain the objective cannot resolve the change, so a
    // feasible step is judged by the KKT measure instead.
    const double resolution = 1e-13 * (1.0 + std::abs(eval.value));
    for (int halving = 0; halving < 60; ++halving, alpha *= 0.5) {
      candidate = (z + alpha * direction).cwiseMax(0.0);
      const double value = problem.value(candidate);
      if (!std::isfinite(value)) continue;
      const double predicted = eval.gradient.dot(candidate - z);
      if (std::abs(predicted) < resolution && halving == 0) {
        const Evaluation trial = problem.evaluate(candidate);
        if (kkt_measure(candidate, trial.gradient) < residual) {
          accepted = true;
          break;
        }
        continue;
      }
      if (value >= eval.value + 1e-4 * predicted && predicted >= 0.0) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Newton direction unusable at this precision: fall back to a scaled
      // projected gradient step.
      alpha = 1.0;
      for (int halving = 0; halving < 60; ++halving, alpha *= 0.5) {
        candidate = (z + alpha * eval.gradient.cwiseQuotient(diag)).cwiseMax(0.0);
        const double value = problem.value(candidate);
        if (std::isfinite(value) && value >= eval.value) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;  // no further progress possible

    z = candidate;
    if (z.maxCoeff() > options.divergence_cap) {
      std::vector<double> witness(z.data(), z.data() + z.size());
      const double total = z.sum();
      for (double& v : witness) v /= total;
      throw UnboundedError("consumer portfolio diverges; objective unbounded", witness);
    }
    eval = problem.evaluate(z);
    residual = kkt_measure(z, eval.gradient);
  }

  // A stalled iterate is still accepted if it is KKT to 1e-10.
  if (residual > std::max(options.gradient_tolerance, 1e-10)) {
    trace.push_back(residual);
    // Slow growth toward an arbitrage can outlast the iteration budget before
    // reaching the divergence cap; report the cause rather than a stall.
    if (!options.check_arbitrage) {
      ArbitrageReport report = detect_arbitrage(economy);
      if (report.has_arbitrage)
        throw UnboundedError("consumer portfolio diverges; economy admits arbitrage",
                             report.witness.value_or(std::vector<double>{}));
    }
    throw NumericalError("consumer solver did not converge", residual, trace);
  }

  EquilibriumSolution sol;
  const int omega = economy.states();
  sol.z = z;
  sol.iterations = iteration;
  sol.consumption = eval.wealth.cwiseQuotient(economy.prices);
  sol.emm_norm = eval.marginal.sum();
  sol.emm = eval.marginal / sol.emm_norm;
  sol.revenue = economy.epsilon / omega * z.sum();
  sol.sigma_q = std::sqrt(omega * (sol.emm - economy.probabilities).squaredNorm());
  sol.completeness = static_cast<double>(sol.traded().size()) / omega;
  sol.utility = eval.value;
  double kkt = 0.0;
  for (int i : sol.traded()) kkt = std::max(kkt, std::abs(eval.gradient(i)));
  sol.kkt_residual = kkt;
  if (options.compute_susceptibility) {
    const SusceptibilityResult chi = susceptibility_finite(economy, sol, options.crra_exponent);
    sol.susceptibility = chi.chi;
    sol.hessian_condition = chi.condition;
  }
  return sol;
}

SusceptibilityResult susceptibility_finite(const Economy& economy,
                                           const EquilibriumSolution& solution,
                                           double crra_exponent) {
  const std::vector<int> traded = solution.traded();
  if (traded.empty()) return {0.0, 1.0};
  const int omega = economy.states();
  const Crra utility{crra_exponent};
  Eigen::VectorXd curvature(omega);
  for (int w = 0; w < omega; ++w) {
    const double p = economy.prices(w);
    curvature(w) = utility.curvature(solution.consumption(w)) / (p * p);
  }
  // -Hessian of sum_w u(c^w) on the traded block.
  const int k = static_cast<int>(traded.size());
  Eigen::MatrixXd rows(k, omega);
  for (int a = 0; a < k; ++a) rows.row(a) = economy.returns.row(traded[a]);
  const Eigen::MatrixXd h = rows * (-curvature).asDiagonal() * rows.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  const double condition = smallest > 0.0 ? largest / smallest
                                          : std::numeric_limits<double>::infinity();
  if (!(smallest > largest * 1e-14))
    throw IllConditionedError("restricted Hessian is singular", condition);
  const double trace = eig.eigenvalues().cwiseInverse().sum();
  return {trace / omega, condition};
}

ArbitrageReport detect_arbitrage(const Economy& economy, double tolerance) {
  const MatrixGameSolution game = solve_matrix_game(economy.returns);
  const Eigen::VectorXd& zeta = game.row_strategy;
  const Eigen::VectorXd payoff = economy.returns.transpose() * zeta;

  ArbitrageReport report;
  report.min_state_payoff = payoff.minCoeff();
  report.max_state_payoff = payoff.maxCoeff();
  report.has_arbitrage =
      report.min_state_payoff >= -tolerance && report.max_state_payoff > tolerance;
  if (report.has_arbitrage) report.witness = std::vector<double>(zeta.data(), zeta.data() + zeta.size());
  return report;
}

namespace {

Estimate estimate(const std::vector<double>& values) {
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

struct SampleResult {
  bool arbitrage = false;
  bool failed = false;
  double completeness = 0.0;
  double sigma_q = 0.0;
  double revenue = 0.0;
  double susceptibility = 0.0;
  std::vector<double> consumption;
};

}  // namespace

EnsembleStatistics ensemble_statistics(const ModelConfig& config, int samples,
                                       const EnsembleOptions& options) {
  config.validate();
  if (samples < 2) throw ConfigError("ensemble_statistics needs at least two samples");

  std::vector<SampleResult> results(static_cast<std::size_t>(samples));
  parallel_for(samples, options.threads, [&](int s) {
    ModelConfig sample_config = config;
    sample_config.seed = derive_seed(config.seed, static_cast<std::uint64_t>(s));
    const Economy economy = sample_economy(sample_config);
    SampleResult& out = results[static_cast<std::size_t>(s)];
    if (detect_arbitrage(economy).has_arbitrage) {
      out.arbitrage = true;
      return;
    }
    SolverOptions solver;
    solver.crra_exponent = config.crra_exponent;
    solver.check_arbitrage = false;
    solver.compute_susceptibility = options.compute_susceptibility;
    try {
      const EquilibriumSolution sol = solve_consumer(economy, solver);
      out.completeness = sol.completeness;
      out.sigma_q = sol.sigma_q;
      out.revenue = sol.revenue;
      out.susceptibility = sol.susceptibility;
      out.consumption.assign(sol.consumption.data(),
                             sol.consumption.data() + sol.consumption.size());
    } catch (const UnboundedError&) {
      out.arbitrage = true;
    } catch (const Error&) {
      out.failed = true;
    }
  });

  EnsembleStatistics stats;
  stats.config = config;
  stats.samples = samples;
  std::vector<double> phi, sigma, revenue, chi, pooled;
  for (const SampleResult& r : results) {
    if (r.arbitrage) {
      ++stats.arbitrage_count;
      continue;
    }
    if (r.failed) {
      ++stats.failure_count;
      continue;
    }
    phi.push_back(r.completeness);
    sigma.push_back(r.sigma_q);
    revenue.push_back(r.revenue);
    chi.push_back(r.susceptibility);
    pooled.insert(pooled.end(), r.consumption.begin(), r.consumption.end());
  }
  if (phi.empty()) throw EmptyStatisticsError("every sample was arbitraged or failed");
  stats.completeness = estimate(phi);
  stats.sigma_q = estimate(sigma);
  stats.revenue = estimate(revenue);
  stats.susceptibility = estimate(chi);

  const int bins = std::max(1, options.histogram_bins);
  const auto [lo_it, hi_it] = std::minmax_element(pooled.begin(), pooled.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi <= lo) hi = lo + 1e-12;
  const double width = (hi - lo) / bins;
  Histogram& hist = stats.consumption;
  hist.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) hist.edges[b] = lo + b * width;
  hist.edges.back() = hi;
  hist.density.assign(static_cast<std::size_t>(bins), 0.0);
  for (double c : pooled) {
    const int b = std::min(bins - 1, static_cast<int>((c - lo) / width));
    hist.density[b] += 1.0;
  }
  for (double& d : hist.density) d /= static_cast<double>(pooled.size()) * width;
  return stats;
}

nlohmann::json to_json(const EquilibriumSolution& solution) {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::json doc;
  doc["schema"] = "randecon.equilibrium/1";
  doc["z"] = vec(solution.z);
  doc["consumption"] = vec(solution.consumption);
  doc["emm"] = vec(solution.emm);
  doc["emm_norm"] = solution.emm_norm;
  doc["revenue"] = solution.revenue;
  doc["sigma_q"] = solution.sigma_q;
  doc["completeness"] = solution.completeness;
  doc["susceptibility"] = solution.susceptibility;
  doc["hessian_condition"] = solution.hessian_condition;
  doc["utility"] = solution.utility;
  doc["kkt_residual"] = solution.kkt_residual;
  doc["iterations"] = solution.iterations;
  return doc;
}

}  // namespace randecon
