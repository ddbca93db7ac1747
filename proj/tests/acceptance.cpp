// Acceptance run: one PASS/FAIL line per criterion. `acceptance k` runs only
// criterion k; without arguments all eight run. Exit status is nonzero if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "randecon/arbitrage_boundary.hpp"
#include "randecon/economy.hpp"
#include "randecon/equilibrium.hpp"
#include "randecon/error.hpp"
#include "randecon/hedging.hpp"
#include "randecon/rng.hpp"
#include "randecon/saddlepoint.hpp"

using namespace randecon;

namespace {

// Pinned tolerances.
constexpr double kHalfCompletenessTol = 5e-3;
constexpr double kCriticalN = 1.92, kCriticalTol = 0.02;
constexpr double kStdErrors = 3.0;
constexpr double kOracleTol = 1e-6, kKktTol = 1e-8;
constexpr double kIdentityTol = 1e-8;
constexpr double kFdRelTol = 1e-3;
constexpr double kHedgeRelTol = 0.15;
constexpr double kVolumeBand = 2.0, kChiGrowth = 10.0;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

ModelConfig model(double n, int omega, double eps, std::uint64_t seed) {
  ModelConfig c;
  c.n_ratio = n;
  c.omega_count = omega;
  c.epsilon = eps;
  c.seed = seed;
  return c;
}

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> out;
  for (int k = 0; lo + k * step <= hi + 1e-12; ++k) out.push_back(lo + k * step);
  return out;
}

struct SaddleCase {
  double n, eps;
};
const std::vector<SaddleCase> kCase1 = {{0.5, 1e-4}, {1.0, 1e-4}, {1.5, 1e-4}, {3.0, 1e-3}};
const std::vector<SaddleCase> kCase3 = {{0.5, 0.05}, {1.0, 0.05}, {1.0, 0.1}};

void criterion1(Verdict& v) {
  for (const SaddleCase& c : kCase1) {
    const SaddleSolution s = solve_order_parameters(c.n, c.eps);
    v.detail << " n=" << c.n << ": phi=" << s.completeness << " sigma=" << s.params.sigma;
    v.require(s.converged, "converged");
    if (c.n < 3.0)
      v.require(std::abs(s.completeness - c.n / 2) < kHalfCompletenessTol, "phi = n/2");
    else
      v.require(s.completeness > 0.95 && s.params.sigma < 0.05, "phi > 0.95, sigma < 0.05");
  }
}

void criterion2(Verdict& v) {
  const BoundaryPoint p = critical_point(-0.01);
  v.detail << " n_c=" << p.n_critical;
  v.require(p.converged && std::abs(p.n_critical - kCriticalN) <= kCriticalTol, "n_c = 1.92 +- 0.02");
  double freq[2];
  const double factors[2] = {0.9, 1.1};
  for (int k = 0; k < 2; ++k) {
    int hits = 0;
    for (int s = 0; s < 200; ++s)
      hits += detect_arbitrage(sample_economy(model(factors[k] * p.n_critical, 400, -0.01,
                                                    derive_seed(20240, s))))
                  .has_arbitrage;
    freq[k] = hits / 200.0;
    v.detail << " freq(" << factors[k] << " n_c)=" << freq[k];
  }
  v.require(freq[0] < 0.5 && freq[1] > 0.5, "frequency brackets 50%");
}

void criterion3(Verdict& v) {
  for (const SaddleCase& c : kCase3) {
    EnsembleOptions o;
    o.compute_susceptibility = false;
    const EnsembleStatistics st = ensemble_statistics(model(c.n, 400, c.eps, 777), 100, o);
    const SaddleSolution s = solve_order_parameters(c.n, c.eps);
    const auto check = [&](const char* name, const Estimate& e, double exact) {
      const double z = std::abs(e.mean - exact) / e.std_error;
      v.detail << " (" << c.n << "," << c.eps << ") " << name << " " << e.mean << "+-" << e.std_error
               << " vs " << exact << ";";
      v.require(z <= kStdErrors, name);
    };
    check("phi", st.completeness, s.completeness);
    check("sigma_q", st.sigma_q, s.emm_distance);
    check("R", st.revenue, s.revenue);
  }
}

void criterion4(Verdict& v) {
  Rng rng(2024);
  double worst_gap = 0.0, worst_kkt = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int omega = 2 + static_cast<int>(rng.below(2));
    const int assets = 1 + static_cast<int>(rng.below(2));
    const double eps = 0.01 + 0.29 * rng.uniform();
    const Economy e = sample_economy(
        model(static_cast<double>(assets) / omega, omega, eps, rng.below(1u << 30)));
    SolverOptions o;
    o.compute_susceptibility = false;
    const EquilibriumSolution sol = solve_consumer(e, o);
    worst_gap = std::max(worst_gap, std::abs(sol.utility - oracle::oracle_utility(e)));
    worst_kkt = std::max(worst_kkt, sol.kkt_residual);
  }
  v.detail << " max |U - U_oracle|=" << worst_gap << " max KKT=" << worst_kkt;
  v.require(worst_gap < kOracleTol, "utility matches oracle");
  v.require(worst_kkt < kKktTol, "KKT residual");
}

void criterion5(Verdict& v) {
  double budget = 0.0, no_arb = 0.0;
  std::vector<SaddleCase> cases = kCase1;
  cases.insert(cases.end(), kCase3.begin(), kCase3.end());
  for (const SaddleCase& c : cases) {
    const SaddleSolution s = solve_order_parameters(c.n, c.eps);
    if (!s.converged) continue;
    budget = std::max(budget, std::abs(s.budget_identity));
    no_arb = std::max(no_arb, std::abs(s.no_arbitrage_identity));
  }
  const BoundaryPoint p = critical_point(-0.01);
  for (double f : {0.9, 1.1}) {
    const double n = f * p.n_critical;
    if (arbitrage_margin(n, -0.01).margin <= 0.0) continue;
    const SaddleSolution s = solve_order_parameters(n, -0.01);
    budget = std::max(budget, std::abs(s.budget_identity));
    no_arb = std::max(no_arb, std::abs(s.no_arbitrage_identity));
  }

  // Finite-size solves at the criterion-3 parameters and on the tiny economies.
  double norm = 0.0, martingale = 0.0;
  int solves = 0;
  const auto audit = [&](const Economy& e) {
    SolverOptions o;
    o.compute_susceptibility = false;
    const EquilibriumSolution sol = solve_consumer(e, o);
    norm = std::max(norm, std::abs(sol.emm.sum() - 1.0));
    const Eigen::VectorXd eq = e.returns * sol.emm;
    for (int i : sol.traded()) martingale = std::max(martingale, std::abs(eq(i)));
    ++solves;
  };
  for (const SaddleCase& c : kCase3)
    for (int s = 0; s < 5; ++s) audit(sample_economy(model(c.n, 400, c.eps, derive_seed(777, s))));
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int omega = 2 + static_cast<int>(rng.below(2));
    const int assets = 1 + static_cast<int>(rng.below(2));
    const double eps = 0.01 + 0.29 * rng.uniform();
    audit(sample_economy(model(static_cast<double>(assets) / omega, omega, eps, rng.below(1u << 30))));
  }
  v.detail << " budget=" << budget << " no-arbitrage=" << no_arb << " |sum q - 1|=" << norm
           << " max|E_q r|=" << martingale << " over " << solves << " finite solves";
  v.require(budget < kIdentityTol, "budget identity");
  v.require(no_arb < kIdentityTol, "no-arbitrage identity");
  v.require(norm < kIdentityTol, "EMM normalization");
  v.require(martingale < kIdentityTol, "E_q[r] = 0 on traded assets");
}

void criterion6(Verdict& v) {
  // Finite differences of the traded positions under a linear tilt.
  Rng rng(606);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const double n = 0.3 + 0.9 * rng.uniform();
    const double eps = 0.02 + 0.08 * rng.uniform();
    const Economy e = sample_economy(model(n, 60, eps, rng.below(1u << 30)));
    const EquilibriumSolution sol = solve_consumer(e);
    double sum = 0.0;
    const double h = 1e-5;
    for (int i : sol.traded()) {
      SolverOptions o;
      o.check_arbitrage = false;
      o.compute_susceptibility = false;
      o.tilt = Eigen::VectorXd::Zero(e.assets());
      o.tilt(i) = h;
      const double up = solve_consumer(e, o).z(i);
      o.tilt(i) = -h;
      sum += (up - solve_consumer(e, o).z(i)) / (2 * h);
    }
    const double fd = sum / e.states();
    if (fd > 0.0) worst = std::max(worst, std::abs(sol.susceptibility / fd - 1.0));
    else v.require(sol.susceptibility == 0.0, "chi = 0 without trades");
  }
  v.detail << " FD max rel err=" << worst << ";";
  v.require(worst < kFdRelTol, "finite-difference susceptibility");

  const double gamma = 0.1;
  const std::vector<TrajectoryPoint> traj = endogenous_trajectory(grid(0.05, 3.0, 0.05), gamma);
  std::vector<const TrajectoryPoint*> ok;
  for (const TrajectoryPoint& p : traj)
    if (p.converged) ok.push_back(&p);
  const double floor = 1.0 - ok.back()->completeness;
  bool chi_up = true, chiw_up = true, exact = true;
  int decade = 0;
  const TrajectoryPoint* prev = nullptr;
  for (const TrajectoryPoint* p : ok) {
    exact = exact && std::abs(p->chi_interbank * gamma * (1 - p->completeness) / p->completeness -
                              1.0) < 1e-12;
    if (1.0 - p->completeness > 10.0 * floor) continue;
    if (prev) {
      chi_up = chi_up && p->chi_consumer > prev->chi_consumer;
      chiw_up = chiw_up && p->chi_interbank > prev->chi_interbank;
    }
    prev = p;
    ++decade;
  }
  v.detail << " final decade 1-phi in [" << floor << "," << 10 * floor << "] has " << decade
           << " points;";
  v.require(decade >= 3, "final decade resolved");
  v.require(chi_up, "chi increasing over final decade");
  v.require(chiw_up, "chi_w increasing over final decade");
  v.require(exact, "chi_w = phi / (gamma (1 - phi)) in the analytic module");

  for (double phi : {0.3, 0.5, 0.7}) {
    HedgeEnsembleOptions o;
    o.target_phi = phi;
    o.bank_risk_aversion = gamma;
    const HedgeEnsemble ens = hedge_ensemble(model(0.5, 200, 0.05, 99), 20, o);
    const double exact_chi = analytic_interbank(phi, gamma).chi_w;
    v.detail << " phi=" << phi << " chi_w=" << ens.susceptibility.mean << " vs " << exact_chi << ";";
    v.require(std::abs(ens.susceptibility.mean / exact_chi - 1.0) < kHedgeRelTol,
              "finite-size chi_w within 15%");
  }
}

void criterion7(Verdict& v) {
  for (double gamma : {0.05, 0.1}) {
    const std::vector<TrajectoryPoint> traj = endogenous_trajectory(grid(0.05, 3.0, 0.05), gamma);
    std::vector<const TrajectoryPoint*> ok;
    bool all_converged = true;
    for (const TrajectoryPoint& p : traj) {
      if (p.converged) ok.push_back(&p);
      else if (!p.at_boundary) all_converged = false;
    }
    bool monotone = true;
    for (std::size_t k = 1; k < ok.size(); ++k)
      monotone = monotone && ok[k]->epsilon_endogenous <= ok[k - 1]->epsilon_endogenous;
    const double phi_max = ok.back()->completeness;

    // Mid-trajectory: the converged point closest to the middle of its n range.
    const double n_mid = 0.5 * (ok.front()->n + ok.back()->n);
    const TrajectoryPoint* mid = *std::min_element(ok.begin(), ok.end(), [&](auto* a, auto* b) {
      return std::abs(a->n - n_mid) < std::abs(b->n - n_mid);
    });
    double v_min = mid->volume_consumer, v_max = mid->volume_consumer;
    for (const TrajectoryPoint* p : ok) {
      if (p->n < mid->n) continue;
      v_min = std::min(v_min, p->volume_consumer);
      v_max = std::max(v_max, p->volume_consumer);
    }
    const double chi_growth = ok.back()->chi_consumer / mid->chi_consumer;
    v.detail << " gamma=" << gamma << ": " << ok.size() << " points to n=" << ok.back()->n
             << ", phi_max=" << phi_max << ", V(mid n=" << mid->n << ")=" << mid->volume_consumer
             << ", V range after mid [" << v_min << "," << v_max << "], V_end="
             << ok.back()->volume_consumer << ", chi growth " << chi_growth << "x;";
    v.require(all_converged, "fixed point converges at every n");
    v.require(phi_max > 0.99, "reaches phi > 0.99");
    v.require(monotone, "eps non-increasing");
    v.require(v_max <= kVolumeBand * mid->volume_consumer &&
                  v_min >= mid->volume_consumer / kVolumeBand,
              "V within 2x of mid-trajectory value (gamma=" + std::to_string(gamma) + ")");
    v.require(chi_growth >= kChiGrowth, "chi grows >= 10x");
  }
}

void criterion8(Verdict& v) {
  double previous = 0.0;
  bool increasing = true;
  for (double n : {0.5, 1.0, 1.5, 1.75, 1.86}) {
    const SaddleSolution s = solve_order_parameters(n, -0.01);
    const double width = consumption_quantile(s, 0.95) - consumption_quantile(s, 0.05);
    v.detail << " n=" << n << ": " << width;
    increasing = increasing && width > previous;
    previous = width;
  }
  v.require(increasing, "5-95% width strictly increasing");
}

const char* kTitles[] = {"",
                         "complete-market limit",
                         "arbitrage boundary",
                         "analytic vs Monte Carlo",
                         "exact-solver oracle",
                         "identity suite",
                         "susceptibility",
                         "endogenous trajectory",
                         "consumption broadening"};

const std::function<void(Verdict&)> kChecks[] = {nullptr,    criterion1, criterion2, criterion3,
                                                 criterion4, criterion5, criterion6, criterion7,
                                                 criterion8};

bool run_one(int k) {
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  try {
    kChecks[k](v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s criterion %d (%s, %.1fs):%s\n", v.pass ? "PASS" : "FAIL", k, kTitles[k], secs,
              v.detail.str().c_str());
  std::fflush(stdout);
  return v.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  if (argc > 1) {
    const int k = std::atoi(argv[1]);
    if (k < 1 || k > 8) {
      std::fprintf(stderr, "usage: acceptance [1-8]\n");
      return 2;
    }
    which.push_back(k);
  } else {
    for (int k = 1; k <= 8; ++k) which.push_back(k);
  }
  int failed = 0;
  for (int k : which) failed += !run_one(k);
  return failed == 0 ? 0 : 1;
}
