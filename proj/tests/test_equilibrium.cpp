#include <cmath>
#include <limits>

#include <boost/math/tools/minima.hpp>

#include "doctest.h"
#include "randecon/economy.hpp"
#include "randecon/equilibrium.hpp"
#include "randecon/error.hpp"
#include "randecon/rng.hpp"
#include "randecon/saddlepoint.hpp"
#include "oracles.hpp"

using namespace randecon;
using namespace randecon::oracle;

namespace {

Economy make_economy(const Eigen::MatrixXd& returns, const Eigen::VectorXd& prices, double eps) {
  Economy e;
  e.returns = returns;
  e.prices = prices;
  e.probabilities = Eigen::VectorXd::Constant(returns.cols(), 1.0 / returns.cols());
  e.epsilon = eps;
  return e;
}

ModelConfig config(double n, int omega, double eps, std::uint64_t seed) {
  ModelConfig c;
  c.n_ratio = n;
  c.omega_count = omega;
  c.epsilon = eps;
  c.seed = seed;
  return c;
}

SolverOptions plain() {
  SolverOptions o;
  o.compute_susceptibility = false;
  return o;
}

}  // namespace

TEST_CASE("single asset, two states: matches golden-section search") {
  const double a = 0.3, eps = 0.01;
  Eigen::MatrixXd r(1, 2);
  r << a, -a - 2.0 * eps / 2.0;
  const Eigen::Vector2d p(0.8, 1.2);
  const Economy e = make_economy(r, p, eps);
  const EquilibriumSolution sol = solve_consumer(e);

  // Stationarity r0/sqrt(p0 w0) = -r1/sqrt(p1 w1) squared is linear in z.
  const double k0 = r(0, 0) * r(0, 0) / p(0), k1 = r(0, 1) * r(0, 1) / p(1);
  const double z_best = (k1 - k0) / (k0 * r(0, 1) - k1 * r(0, 0));
  REQUIRE(z_best > 0.0);
  const double u_best = 0.5 * (2.0 * (std::sqrt((1.0 + z_best * r(0, 0)) / p(0)) - 1.0) +
                               2.0 * (std::sqrt((1.0 + z_best * r(0, 1)) / p(1)) - 1.0));
  CHECK(sol.z(0) == doctest::Approx(z_best).epsilon(1e-9));
  CHECK(std::abs(sol.utility - u_best) < 1e-12);
  CHECK(sol.completeness == doctest::Approx(0.5));
}

TEST_CASE("large premium: corner solution") {
  const Economy e = sample_economy(config(0.5, 20, 5.0, 3));
  const EquilibriumSolution sol = solve_consumer(e);
  CHECK(sol.z.cwiseAbs().maxCoeff() == 0.0);
  for (int w = 0; w < e.states(); ++w) CHECK(sol.consumption(w) == doctest::Approx(1.0 / e.prices(w)));
  CHECK(sol.completeness == 0.0);
  CHECK(sol.revenue == 0.0);
  CHECK(sol.susceptibility == 0.0);
}

TEST_CASE("near-logarithmic utility holds nothing for positive premium") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ModelConfig c = config(1.0, 50, 0.05, seed);
    c.crra_exponent = 1e-6;
    SolverOptions o = plain();
    o.crra_exponent = 1e-6;
    const EquilibriumSolution sol = solve_consumer(sample_economy(c), o);
    CHECK(sol.z.maxCoeff() < 1e-10);
    CHECK(sol.completeness == 0.0);
  }
}

TEST_CASE("tiny economies: optimum matches the nested Brent oracle") {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int omega = 2 + static_cast<int>(rng.below(2));
    const int assets = 1 + static_cast<int>(rng.below(2));
    const double eps = 0.01 + 0.29 * rng.uniform();
    ModelConfig c = config(static_cast<double>(assets) / omega, omega, eps, rng.below(1u << 30));
    const Economy e = sample_economy(c);
    REQUIRE(e.assets() == assets);
    const EquilibriumSolution sol = solve_consumer(e, plain());
    const double oracle = oracle_utility(e);
    CHECK(std::abs(sol.utility - oracle) < 1e-6);
    CHECK(sol.utility >= oracle - 1e-12);
    CHECK(sol.kkt_residual < 1e-8);
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("equilibrium invariants on random economies") {
  struct Case {
    double n, eps;
    std::uint64_t seed;
  };
  for (const Case& k : {Case{0.5, 0.05, 11}, Case{1.0, 0.01, 12}, Case{1.5, -0.01, 13}}) {
    CAPTURE(k.n);
    const Economy e = sample_economy(config(k.n, 100, k.eps, k.seed));
    REQUIRE_FALSE(detect_arbitrage(e).has_arbitrage);
    const EquilibriumSolution sol = solve_consumer(e);
    const std::vector<int> traded = sol.traded();
    std::vector<bool> is_traded(e.assets(), false);
    for (int i : traded) is_traded[i] = true;

    CHECK(sol.z.minCoeff() >= 0.0);
    CHECK(sol.consumption.minCoeff() > 0.0);
    CHECK(std::abs(sol.emm.sum() - 1.0) < 1e-10);
    CHECK(sol.emm.minCoeff() > 0.0);
    CHECK(sol.completeness == doctest::Approx(static_cast<double>(traded.size()) / 100));
    CHECK(sol.completeness <= k.n + 1e-12);

    const Eigen::VectorXd g = utility_gradient(e, sol.consumption);
    const Eigen::VectorXd eq = e.returns * sol.emm;  // E_q[r_i]
    for (int i = 0; i < e.assets(); ++i) {
      if (is_traded[i]) {
        CHECK(std::abs(g(i)) < 1e-8);
        CHECK(std::abs(eq(i)) < 1e-8);
      } else {
        CHECK(g(i) < 1e-12);
        CHECK(eq(i) < 1e-12);
      }
    }
    const double spending = e.probabilities.dot(sol.consumption.cwiseProduct(e.prices));
    CHECK(std::abs(spending + k.eps / 100 * sol.z.sum() - 1.0) < 1e-8);
    CHECK(sol.revenue == doctest::Approx(k.eps / 100 * sol.z.sum()));

    // No nearby feasible portfolio does better.
    Rng rng(k.seed);
    const double best = expected_utility(e, sol.z);
    CHECK(std::abs(best - sol.utility) < 1e-12);
    int worse = 0;
    for (int trial = 0; trial < 10000; ++trial) {
      Eigen::VectorXd dz(e.assets());
      const double scale = std::pow(10.0, -1.0 - 4.0 * rng.uniform());
      for (int i = 0; i < e.assets(); ++i) dz(i) = scale * rng.normal();
      const Eigen::VectorXd z = (sol.z + dz).cwiseMax(0.0);
      worse += expected_utility(e, z) <= best + 1e-14;
    }
    CHECK(worse == 10000);
  }
}

TEST_CASE("susceptibility matches finite-difference re-solves") {
  const Economy e = sample_economy(config(0.5, 100, 0.1, 5));
  const EquilibriumSolution sol = solve_consumer(e);
  const std::vector<int> traded = sol.traded();
  REQUIRE(traded.size() > 3);
  const double h = 1e-5;
  double sum = 0.0;
  for (int i : traded) {
    SolverOptions o = plain();
    o.check_arbitrage = false;
    o.tilt = Eigen::VectorXd::Zero(e.assets());
    o.tilt(i) = h;
    const double up = solve_consumer(e, o).z(i);
    o.tilt(i) = -h;
    const double down = solve_consumer(e, o).z(i);
    sum += (up - down) / (2.0 * h);
  }
  const double chi_fd = sum / e.states();
  CHECK(sol.susceptibility == doctest::Approx(chi_fd).epsilon(1e-3));
  CHECK(sol.hessian_condition >= 1.0);
}

TEST_CASE("susceptibility of an empty traded set is zero") {
  const Economy e = sample_economy(config(0.5, 20, 5.0, 3));
  const EquilibriumSolution sol = solve_consumer(e);
  CHECK(susceptibility_finite(e, sol).chi == 0.0);
}

TEST_CASE("susceptibility grows with n") {
  EnsembleOptions o;
  o.histogram_bins = 10;
  double previous = 0.0;
  for (double n : {0.25, 0.5, 1.0}) {
    const EnsembleStatistics s = ensemble_statistics(config(n, 100, 0.01, 77), 6, o);
    CHECK(s.susceptibility.mean > previous);
    previous = s.susceptibility.mean;
  }
}

TEST_CASE("finite-size susceptibility is normalized like the saddle point") {
  // Per state, not per asset: at n = 0.5 the two conventions differ by 2x.
  const EnsembleStatistics st = ensemble_statistics(config(0.5, 200, 0.05, 5), 20);
  const double chi = solve_order_parameters(0.5, 0.05).params.chi;
  CHECK(std::abs(st.susceptibility.mean - chi) < 3.0 * st.susceptibility.std_error);
}

TEST_CASE("singular traded Hessian is reported") {
  // Two identical assets are both traded by symmetry; their Hessian block is singular.
  Eigen::MatrixXd r(2, 3);
  r << 0.4, -0.1, -0.33, 0.4, -0.1, -0.33;
  const Economy e = make_economy(r, Eigen::Vector3d(1.0, 1.0, 1.0), 0.03);
  EquilibriumSolution sol = solve_consumer(e, plain());
  sol.z = Eigen::Vector2d(0.1, 0.1);
  sol.consumption = Eigen::Vector3d(1.04, 0.98, 0.934);
  CHECK_THROWS_AS(susceptibility_finite(e, sol), IllConditionedError);
}

TEST_CASE("arbitrage detection") {
  SUBCASE("explicit witness") {
    Eigen::MatrixXd r(2, 2);
    r << 1, -1, -1, 2;
    const ArbitrageReport rep = detect_arbitrage(make_economy(r, Eigen::Vector2d(1, 1), 0.0));
    CHECK(rep.has_arbitrage);
    REQUIRE(rep.witness);
    // zeta = (3, 2) / 5 pays (1, 1) / 5 in both states.
    CHECK((*rep.witness)[0] == doctest::Approx(0.6));
    CHECK((*rep.witness)[1] == doctest::Approx(0.4));
    CHECK(rep.min_state_payoff == doctest::Approx(0.2));
  }
  SUBCASE("positive premium is arbitrage free") {
    for (std::uint64_t seed : {1u, 2u}) {
      const ArbitrageReport rep = detect_arbitrage(sample_economy(config(3.0, 100, 0.05, seed)));
      CHECK_FALSE(rep.has_arbitrage);
      CHECK_FALSE(rep.witness);
      CHECK(rep.min_state_payoff < 0.0);
    }
  }
  SUBCASE("witness invariants") {
    const Economy e = sample_economy(config(3.0, 100, -0.05, 4));
    const ArbitrageReport rep = detect_arbitrage(e);
    REQUIRE(rep.has_arbitrage);
    const Eigen::Map<const Eigen::VectorXd> zeta(rep.witness->data(), e.assets());
    CHECK(zeta.minCoeff() >= 0.0);
    const Eigen::VectorXd payoff = e.returns.transpose() * zeta;
    CHECK(payoff.minCoeff() >= -1e-9);
    CHECK(payoff.maxCoeff() > 1e-9);
  }
}

TEST_CASE("solver diverges exactly when an arbitrage exists") {
  // n_c(-0.05) is about 1.73; the scan straddles it.
  int arbitraged = 0;
  for (int k = 0; k < 100; ++k) {
    const double n = 1.2 + 1.2 * k / 99.0;
    const Economy e = sample_economy(config(n, 30, -0.05, derive_seed(31, k)));
    const bool arbitrage = detect_arbitrage(e).has_arbitrage;
    SolverOptions o = plain();
    o.check_arbitrage = false;
    bool diverged = false;
    CAPTURE(k);
    CAPTURE(n);
    try {
      solve_consumer(e, o);
    } catch (const UnboundedError&) {
      diverged = true;
    } catch (const NumericalError& err) {
      FAIL_CHECK(err.what() << " residual " << err.residual());
      continue;
    }
    CHECK(arbitrage == diverged);
    arbitraged += arbitrage;
  }
  CHECK(arbitraged > 10);
  CHECK(arbitraged < 90);
}

TEST_CASE("solve_consumer refuses an arbitrage economy") {
  const Economy e = sample_economy(config(3.0, 100, -0.05, 4));
  try {
    solve_consumer(e);
    FAIL("expected UnboundedError");
  } catch (const UnboundedError& err) {
    CHECK(err.witness().size() == static_cast<std::size_t>(e.assets()));
  }
}

TEST_CASE("ensemble statistics") {
  EnsembleOptions o;
  o.histogram_bins = 20;
  SUBCASE("deterministic") {
    const EnsembleStatistics a = ensemble_statistics(config(0.5, 60, 0.05, 9), 5, o);
    const EnsembleStatistics b = ensemble_statistics(config(0.5, 60, 0.05, 9), 5, o);
    CHECK(a.completeness.mean == b.completeness.mean);
    CHECK(a.revenue.mean == b.revenue.mean);
    CHECK(a.consumption.density == b.consumption.density);
    CHECK(a.completeness.count == 5);
    CHECK(a.completeness.std_error > 0.0);
    double area = 0.0;
    for (std::size_t k = 0; k < a.consumption.density.size(); ++k)
      area += a.consumption.density[k] * (a.consumption.edges[k + 1] - a.consumption.edges[k]);
    CHECK(area == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("thread count does not change results") {
    EnsembleOptions one = o, two = o;
    one.threads = 1;
    two.threads = 2;
    const EnsembleStatistics a = ensemble_statistics(config(0.5, 60, 0.05, 9), 6, one);
    const EnsembleStatistics b = ensemble_statistics(config(0.5, 60, 0.05, 9), 6, two);
    CHECK(a.completeness.mean == b.completeness.mean);
    CHECK(a.susceptibility.mean == b.susceptibility.mean);
  }
  SUBCASE("arbitrage samples are counted and excluded") {
    CHECK_THROWS_AS(ensemble_statistics(config(3.0, 40, -0.1, 1), 3, o), EmptyStatisticsError);
    const EnsembleStatistics s = ensemble_statistics(config(1.8, 40, -0.05, 2), 12, o);
    CHECK(s.arbitrage_count > 0);
    CHECK(s.completeness.count == 12 - s.arbitrage_count - s.failure_count);
  }
  SUBCASE("bad sample count") {
    CHECK_THROWS_AS(ensemble_statistics(config(0.5, 60, 0.05, 9), 1, o), ConfigError);
  }
}

TEST_CASE("finite-size consumption broadens with n") {
  EnsembleOptions o;
  o.histogram_bins = 200;
  o.compute_susceptibility = false;
  const auto width = [](const Histogram& h) {
    double mass = 0.0, lo = 0.0, hi = 0.0;
    bool have_lo = false;
    for (std::size_t k = 0; k < h.density.size(); ++k) {
      const double dx = h.edges[k + 1] - h.edges[k];
      mass += h.density[k] * dx;
      if (!have_lo && mass >= 0.05) {
        lo = h.edges[k + 1];
        have_lo = true;
      }
      if (mass >= 0.95) {
        hi = h.edges[k + 1];
        break;
      }
    }
    return hi - lo;
  };
  const EnsembleStatistics a = ensemble_statistics(config(0.5, 200, -0.01, 3), 10, o);
  const EnsembleStatistics b = ensemble_statistics(config(1.86, 200, -0.01, 3), 10, o);
  REQUIRE(b.completeness.count > 0);
  CHECK(width(b.consumption) > 1.5 * width(a.consumption));
}

TEST_CASE("solution json") {
  const EquilibriumSolution sol = solve_consumer(sample_economy(config(0.5, 20, 0.05, 1)));
  const nlohmann::json doc = to_json(sol);
  CHECK(doc["schema"] == "randecon.equilibrium/1");
  CHECK(doc["z"].size() == 10);
  CHECK(doc["consumption"].size() == 20);
}
