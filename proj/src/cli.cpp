#include "randecon/cli.hpp"

#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <variant>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "randecon/arbitrage_boundary.hpp"
#include "randecon/equilibrium.hpp"
#include "randecon/error.hpp"
#include "randecon/hedging.hpp"
#include "randecon/parallel.hpp"
#include "randecon/rng.hpp"
#include "randecon/saddlepoint.hpp"

#ifndef RANDECON_VERSION
#define RANDECON_VERSION "0.0.0"
#endif

namespace randecon {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::map<std::string, Command> kCommands = {
    {"solve", Command::solve},           {"sweep", Command::sweep},
    {"boundary", Command::boundary},     {"trajectory", Command::trajectory},
    {"simulate", Command::simulate},     {"hedge", Command::hedge},
};

std::string number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.15g", x);
  return buffer;
}

// Short form for file names.
std::string tag(double x) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%g", x);
  return buffer;
}

using Cell = std::variant<double, long long, bool, std::string>;

struct Table {
  std::string name;    // file stem
  std::string schema;  // e.g. randecon.sweep/1
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::string csv() const {
    std::ostringstream out;
    out << "# schema=" << schema;
    for (const auto& [key, value] : meta) out << ' ' << key << '=' << value;
    out << '\n';
    for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << columns[k];
    out << '\n';
    for (const auto& row : rows) {
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (k) out << ',';
        std::visit(
            [&](const auto& v) {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, double>)
                out << number(v);
              else if constexpr (std::is_same_v<T, bool>)
                out << (v ? 1 : 0);
              else
                out << v;
            },
            row[k]);
      }
      out << '\n';
    }
    return out.str();
  }

  std::string json() const {
    nlohmann::ordered_json doc;
    doc["schema"] = schema;
    for (const auto& [key, value] : meta) doc["meta"][key] = value;
    doc["columns"] = columns;
    doc["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
      nlohmann::ordered_json record;
      for (std::size_t k = 0; k < row.size(); ++k)
        std::visit(
            [&](const auto& v) {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, double>) {
                if (std::isfinite(v))
                  record[columns[k]] = v;
                else
                  record[columns[k]] = nullptr;
              } else {
                record[columns[k]] = v;
              }
            },
            row[k]);
      doc["rows"].push_back(std::move(record));
    }
    return doc.dump(1) + "\n";
  }
};

// Collects output in memory; files are written once, by one thread.
class Writer {
 public:
  Writer(std::filesystem::path dir, Format format) : dir_(std::move(dir)), format_(format) {}

  void add(const Table& table) {
    if (format_ == Format::csv)
      put(table.name + ".csv", table.csv());
    else
      put(table.name + ".json", table.json());
  }
  void put(const std::string& file, const std::string& content) { files_[file] = content; }

  std::vector<std::string> flush() {
    std::vector<std::string> names;
    for (const auto& [file, content] : files_) {
      std::ofstream out(dir_ / file, std::ios::binary);
      out << content;
      if (!out) throw ConfigError("cannot write " + (dir_ / file).string());
      names.push_back(file);
    }
    files_.clear();
    return names;
  }

 private:
  std::filesystem::path dir_;
  Format format_;
  std::map<std::string, std::string> files_;
};

SaddleOptions saddle_options(const RunConfig& config) {
  SaddleOptions options;
  options.crra_exponent = config.model.crra_exponent;
  options.price_spread = config.model.price_spread;
  options.quadrature_order = config.quadrature_order;
  options.tolerance = config.tolerance;
  return options;
}

const std::vector<std::string> kSaddleColumns = {
    "n",     "epsilon", "lambda",       "nu", "sigma", "G",         "chi",      "kappa",
    "phi",   "emm_distance", "R",       "V",  "converged", "residual", "at_boundary"};

std::vector<Cell> saddle_row(double n, double epsilon, const SaddleSolution* s) {
  if (!s) return {n, epsilon, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN,
                  kNaN, kNaN, kNaN, kNaN, false, kNaN, false};
  const OrderParameters& p = s->params;
  return {n,           epsilon,         p.lambda,  p.nu,      p.sigma,
          p.big_g,     p.chi,           p.kappa,   s->completeness, s->emm_distance,
          s->revenue,  s->volume,       s->converged, s->residual, s->at_boundary};
}

std::vector<std::pair<std::string, std::string>> model_meta(const RunConfig& config) {
  return {{"crra_exponent", number(config.model.crra_exponent)},
          {"price_spread", number(config.model.price_spread)},
          {"quadrature_order", std::to_string(config.quadrature_order)},
          {"tolerance", number(config.tolerance)}};
}

struct Outcome {
  std::vector<std::string> warnings;
};

Outcome run_solve(const RunConfig& config, Writer& writer) {
  Outcome outcome;
  const SaddleOptions options = saddle_options(config);
  Table table{"solve", "randecon.solve/1", model_meta(config), kSaddleColumns, {}};
  for (const char* extra : {"budget_identity", "no_arbitrage_identity", "utility"})
    table.columns.push_back(extra);

  for (double n : config.n_grid()) {
    for (double eps : config.epsilon_grid()) {
      const SaddleSolution s = solve_order_parameters(n, eps, options);
      auto row = saddle_row(n, eps, &s);
      row.insert(row.end(), {s.budget_identity, s.no_arbitrage_identity, s.utility});
      table.rows.push_back(std::move(row));
      const std::string point = "n" + tag(n) + "_eps" + tag(eps);

      std::vector<double> grid = config.density_grid;
      if (grid.empty()) {
        const double lo = consumption_quantile(s, 1e-10), hi = consumption_quantile(s, 1 - 1e-10);
        const int points = 2001;
        for (int k = 0; k < points; ++k) grid.push_back(lo + (hi - lo) * k / (points - 1));
      }
      const std::vector<double> density = consumption_density(s, grid);
      const double covered = consumption_cdf(s, grid.back()) - consumption_cdf(s, grid.front());
      if (!(std::abs(covered - 1.0) <= 1e-6)) {
        outcome.warnings.push_back("density grid for " + point + " covers probability " +
                                   number(covered) + "; density does not integrate to 1");
      }
      Table dens{"density_" + point, "randecon.density/1",
                 {{"n", number(n)}, {"epsilon", number(eps)}, {"covered", number(covered)}},
                 {"c", "density"}, {}};
      for (std::size_t k = 0; k < grid.size(); ++k) dens.rows.push_back({grid[k], density[k]});
      writer.add(dens);

      if (config.finite) {
        ModelConfig model = config.model;
        model.n_ratio = n;
        model.epsilon = eps;
        const Economy economy = sample_economy(model);
        nlohmann::json doc;
        doc["schema"] = "randecon.finite/1";
        doc["n"] = n;
        doc["epsilon"] = eps;
        doc["omega"] = model.omega_count;
        doc["seed"] = model.seed;
        doc["generator"] = std::string(Rng::kName);
        const ArbitrageReport report = detect_arbitrage(economy);
        doc["has_arbitrage"] = report.has_arbitrage;
        doc["min_state_payoff"] = report.min_state_payoff;
        if (report.has_arbitrage) {
          doc["witness"] = *report.witness;
        } else {
          SolverOptions solver;
          solver.crra_exponent = model.crra_exponent;
          solver.check_arbitrage = false;
          doc["solution"] = to_json(solve_consumer(economy, solver));
        }
        writer.put("finite_" + point + ".json", doc.dump(1) + "\n");
      }
    }
  }
  writer.add(table);
  return outcome;
}

Outcome run_sweep(const RunConfig& config, Writer& writer) {
  Outcome outcome;
  const SaddleOptions options = saddle_options(config);
  const std::vector<double> eps = config.epsilon_grid();
  std::vector<std::vector<SweepPoint>> curves(eps.size());
  parallel_for(static_cast<int>(eps.size()), config.threads,
               [&](int k) { curves[k] = sweep(config.n_grid(), eps[k], options); });

  int solved = 0;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    auto meta = model_meta(config);
    meta.insert(meta.begin(), {"epsilon", number(eps[k])});
    Table table{"sweep_eps" + tag(eps[k]), "randecon.sweep/1", meta, kSaddleColumns, {}};
    for (const SweepPoint& p : curves[k]) {
      table.rows.push_back(saddle_row(p.n, eps[k], p.solution ? &*p.solution : nullptr));
      if (p.solution)
        ++solved;
      else
        outcome.warnings.push_back("n=" + number(p.n) + " eps=" + number(eps[k]) + ": " + p.error);
    }
    writer.add(table);
  }
  if (solved == 0) throw NumericalError("no sweep point converged", kNaN);
  return outcome;
}

Outcome run_boundary(const RunConfig& config, Writer& writer) {
  Outcome outcome;
  const std::vector<double> eps = config.epsilon_grid();
  for (double e : eps)
    if (!(e < 0.0)) throw ConfigError("boundary needs epsilon < 0");
  std::vector<BoundaryPoint> points(eps.size());
  parallel_for(static_cast<int>(eps.size()), config.threads,
               [&](int k) { points[k] = boundary_curve({eps[k]}).front(); });

  Table table{"boundary", "randecon.boundary/1", {},
              {"epsilon", "n_critical", "xi", "t0", "residual_1", "residual_2", "root_count",
               "converged"},
              {}};
  int solved = 0;
  for (const BoundaryPoint& p : points) {
    table.rows.push_back({p.epsilon, p.n_critical, p.xi, p.t0, p.residual_1, p.residual_2,
                          static_cast<long long>(p.root_count), p.converged});
    if (p.converged) ++solved;
    if (!p.error.empty()) outcome.warnings.push_back("eps=" + number(p.epsilon) + ": " + p.error);
    if (p.root_count > 1)
      outcome.warnings.push_back("eps=" + number(p.epsilon) + ": " +
                                 std::to_string(p.root_count) + " local minima in xi");
  }
  writer.add(table);
  if (solved == 0) throw NumericalError("no boundary point converged", kNaN);
  return outcome;
}

Outcome run_trajectory(const RunConfig& config, Writer& writer) {
  Outcome outcome;
  TrajectoryOptions options;
  options.saddle = saddle_options(config);
  const std::vector<double>& gammas = config.bank_risk_aversion;
  std::vector<std::vector<TrajectoryPoint>> curves(gammas.size());
  parallel_for(static_cast<int>(gammas.size()), config.threads, [&](int k) {
    curves[k] = endogenous_trajectory(config.n_grid(), gammas[k], options);
  });

  int solved = 0;
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    auto meta = model_meta(config);
    meta.insert(meta.begin(), {"gamma", number(gammas[k])});
    Table table{"trajectory_gamma" + tag(gammas[k]), "randecon.trajectory/1", meta,
                {"n", "epsilon", "phi", "chi", "V", "g", "chi_w", "gamma", "converged",
                 "at_boundary", "residual"},
                {}};
    for (const TrajectoryPoint& p : curves[k]) {
      const bool failed = !p.converged && !p.at_boundary;
      const double f = failed ? kNaN : 1.0;
      table.rows.push_back({p.n, f * p.epsilon_endogenous, f * p.completeness,
                            f * p.chi_consumer, f * p.volume_consumer, f * p.interbank_volume,
                            f * p.chi_interbank, p.bank_risk_aversion, p.converged, p.at_boundary,
                            f * p.fixed_point_residual});
      if (p.converged) ++solved;
      if (!p.error.empty())
        outcome.warnings.push_back("gamma=" + number(gammas[k]) + " n=" + number(p.n) + ": " +
                                   p.error);
    }
    writer.add(table);
  }
  if (solved == 0) throw NumericalError("no trajectory point converged", kNaN);
  return outcome;
}

Outcome run_simulate(const RunConfig& config, Writer& writer) {
  Outcome outcome;
  Table table{"ensemble",
              "randecon.ensemble/1",
              {{"omega", std::to_string(config.model.omega_count)},
               {"seed", std::to_string(config.model.seed)},
               {"generator", std::string(Rng::kName)}},
              {"n", "epsilon", "omega", "samples", "phi", "sigma_q", "R", "chi", "phi_se",
               "sigma_q_se", "R_se", "chi_se", "arbitrage_count", "failure_count"},
              {}};
  EnsembleOptions options;
  options.threads = config.threads;
  for (double n : config.n_grid()) {
    for (double eps : config.epsilon_grid()) {
      ModelConfig model = config.model;
      model.n_ratio = n;
      model.epsilon = eps;
      const auto count = [](int c) { return static_cast<long long>(c); };
      try {
        const EnsembleStatistics s = ensemble_statistics(model, config.samples, options);
        table.rows.push_back({n, eps, count(model.omega_count), count(config.samples),
                              s.completeness.mean, s.sigma_q.mean, s.revenue.mean,
                              s.susceptibility.mean, s.completeness.std_error,
                              s.sigma_q.std_error, s.revenue.std_error,
                              s.susceptibility.std_error, count(s.arbitrage_count),
                              count(s.failure_count)});
        Table hist{"histogram_n" + tag(n) + "_eps" + tag(eps), "randecon.histogram/1",
                   {{"n", number(n)}, {"epsilon", number(eps)}},
                   {"bin_left", "bin_right", "density"}, {}};
        for (std::size_t b = 0; b < s.consumption.density.size(); ++b)
          hist.rows.push_back(
              {s.consumption.edges[b], s.consumption.edges[b + 1], s.consumption.density[b]});
        writer.add(hist);
      } catch (const EmptyStatisticsError& e) {
        // Every sample had an arbitrage (or failed); the row still records it.
        table.rows.push_back({n, eps, count(model.omega_count), count(config.samples), kNaN,
                              kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN,
                              count(config.samples), 0LL});
        outcome.warnings.push_back("n=" + number(n) + " eps=" + number(eps) + ": " + e.what());
      }
    }
  }
  writer.add(table);
  return outcome;
}

Outcome run_hedge(const RunConfig& config, Writer& writer) {
  Outcome outcome;
  const bool unbiased = config.selection == "unbiased";
  Table table{"hedge",
              "randecon.hedge/1",
              {{"selection", config.selection},
               {"omega", std::to_string(config.model.omega_count)},
               {"seed", std::to_string(config.model.seed)}},
              {"gamma", "n", "epsilon", "samples", "failures", "phi", "phi_se", "g", "g_se",
               "chi_w", "chi_w_se", "scaled_risk", "scaled_risk_se", "premium", "premium_se",
               "g_analytic", "chi_w_analytic", "premium_analytic"},
              {}};
  struct Point {
    double n, eps, phi;
  };
  std::vector<Point> points;
  if (unbiased) {
    for (double phi : config.phi_values)
      for (double eps : config.epsilon_grid()) points.push_back({phi, eps, phi});
  } else {
    for (double n : config.n_grid())
      for (double eps : config.epsilon_grid()) points.push_back({n, eps, 0.0});
  }
  for (double gamma : config.bank_risk_aversion) {
    for (const Point& p : points) {
      ModelConfig model = config.model;
      model.n_ratio = p.n;
      model.epsilon = p.eps;
      HedgeEnsembleOptions options;
      options.selection = unbiased ? TradedSelection::unbiased : TradedSelection::consumer;
      options.target_phi = p.phi;
      options.bank_risk_aversion = gamma;
      options.threads = config.threads;
      const HedgeEnsemble h = hedge_ensemble(model, config.samples, options);
      const double phi = h.completeness.mean;
      InterbankAnalytic analytic{kNaN, kNaN};
      double premium = kNaN;
      if (phi >= 0.0 && phi < 1.0) {
        analytic = analytic_interbank(phi, gamma);
        premium = analytic_premium(phi, gamma);
      }
      table.rows.push_back({gamma, p.n, p.eps, static_cast<long long>(h.samples),
                            static_cast<long long>(h.failures), phi, h.completeness.std_error,
                            h.interbank_volume.mean, h.interbank_volume.std_error,
                            h.susceptibility.mean, h.susceptibility.std_error,
                            h.scaled_risk.mean, h.scaled_risk.std_error, h.implied_premium.mean,
                            h.implied_premium.std_error, analytic.g, analytic.chi_w, premium});
    }
  }
  writer.add(table);
  return outcome;
}

std::string compiler() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown";
#endif
}

nlohmann::json versions() {
  return {{"randecon", RANDECON_VERSION},
          {"compiler", compiler()},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"cli11", std::to_string(CLI11_VERSION_MAJOR) + "." +
                        std::to_string(CLI11_VERSION_MINOR) + "." +
                        std::to_string(CLI11_VERSION_PATCH)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  out << doc.dump(1) << '\n';
}

std::vector<double> values_from_json(const nlohmann::json& v) {
  if (v.is_number()) return {v.get<double>()};
  if (v.is_string()) return parse_values(v.get<std::string>());
  if (v.is_array()) {
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError("expected a list of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  throw ConfigError("expected a number, a list or a range string");
}

}  // namespace

std::vector<double> RunConfig::n_grid() const {
  return n_values.empty() ? std::vector<double>{model.n_ratio} : n_values;
}

std::vector<double> RunConfig::epsilon_grid() const {
  return epsilon_values.empty() ? std::vector<double>{model.epsilon} : epsilon_values;
}

void RunConfig::validate() const {
  model.validate();
  for (double n : n_grid())
    if (!(n > 0.0) || !std::isfinite(n)) throw ConfigError("n must be positive");
  for (double e : epsilon_grid())
    if (!std::isfinite(e)) throw ConfigError("epsilon must be finite");
  const std::vector<double> ns = n_grid();
  if ((command == Command::sweep || command == Command::trajectory) &&
      !std::is_sorted(ns.begin(), ns.end()))
    throw ConfigError("n values must be ascending");
  if (output_dir.empty()) throw ConfigError("output directory must be set");
  if (quadrature_order < 16) throw ConfigError("quadrature order must be at least 16");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (samples < 2) throw ConfigError("samples must be at least 2");
  if (bank_risk_aversion.empty()) throw ConfigError("at least one bank risk aversion is needed");
  for (double g : bank_risk_aversion)
    if (!(g > 0.0)) throw ConfigError("bank risk aversion must be positive");
  for (double phi : phi_values)
    if (!(phi > 0.0 && phi < 1.0)) throw ConfigError("phi values must lie in (0, 1)");
  if (selection != "unbiased" && selection != "consumer")
    throw ConfigError("selection must be 'unbiased' or 'consumer'");
  if (!density_grid.empty() && !std::is_sorted(density_grid.begin(), density_grid.end()))
    throw ConfigError("density grid must be ascending");
}

std::vector<double> parse_values(const std::string& text) {
  const auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + s + "' in '" + text + "'");
    }
    if (used != s.size() || !std::isfinite(v))
      throw ConfigError("not a number: '" + s + "' in '" + text + "'");
    return v;
  };
  std::vector<std::string> parts;
  const char sep = text.find(':') != std::string::npos ? ':' : ',';
  std::stringstream in(text);
  for (std::string part; std::getline(in, part, sep);) parts.push_back(part);
  if (text.empty() || text.back() == sep) throw ConfigError("empty value in '" + text + "'");

  std::vector<double> out;
  if (sep == ',') {
    for (const auto& p : parts) out.push_back(to_double(p));
    return out;
  }
  if (parts.size() != 3) throw ConfigError("range must be start:stop:step, got '" + text + "'");
  const double start = to_double(parts[0]), stop = to_double(parts[1]), step = to_double(parts[2]);
  if (!(step > 0.0) || stop < start)
    throw ConfigError("range needs step > 0 and stop >= start: '" + text + "'");
  const double count = std::floor((stop - start) / step + 1e-9);
  if (count > 1e6) throw ConfigError("range has too many points: '" + text + "'");
  for (long k = 0; k <= static_cast<long>(count); ++k) {
    // Round away the accumulated representation error of start + k step.
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.12g", start + k * step);
    out.push_back(std::stod(buffer));
  }
  return out;
}

std::string to_string(Command command) {
  for (const auto& [name, c] : kCommands)
    if (c == command) return name;
  return "unknown";
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json doc;
  doc["command"] = to_string(c.command);
  doc["n"] = c.n_grid();
  doc["epsilon"] = c.epsilon_grid();
  doc["omega"] = c.model.omega_count;
  doc["crra_exponent"] = c.model.crra_exponent;
  doc["price_spread"] = c.model.price_spread;
  doc["seed"] = c.model.seed;
  doc["output_dir"] = c.output_dir;
  doc["format"] = c.format == Format::csv ? "csv" : "json";
  doc["quadrature_order"] = c.quadrature_order;
  doc["tolerance"] = c.tolerance;
  doc["gamma"] = c.bank_risk_aversion;
  doc["phi"] = c.phi_values;
  doc["grid"] = c.density_grid;
  doc["samples"] = c.samples;
  doc["threads"] = c.threads;
  doc["finite"] = c.finite;
  doc["selection"] = c.selection;
  return doc;
}

void apply_json(const nlohmann::json& doc, RunConfig& c) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "command") {
        const auto it = kCommands.find(v.get<std::string>());
        if (it == kCommands.end()) throw ConfigError("unknown command " + v.dump());
        c.command = it->second;
      } else if (key == "n") {
        c.n_values = values_from_json(v);
        if (!c.n_values.empty()) c.model.n_ratio = c.n_values.front();
      } else if (key == "epsilon") {
        c.epsilon_values = values_from_json(v);
        if (!c.epsilon_values.empty()) c.model.epsilon = c.epsilon_values.front();
      } else if (key == "omega") {
        c.model.omega_count = v.get<int>();
      } else if (key == "crra_exponent") {
        c.model.crra_exponent = v.get<double>();
      } else if (key == "price_spread") {
        c.model.price_spread = v.get<double>();
      } else if (key == "seed") {
        c.model.seed = v.get<std::uint64_t>();
      } else if (key == "output_dir") {
        c.output_dir = v.get<std::string>();
      } else if (key == "format") {
        const std::string f = v.get<std::string>();
        if (f != "csv" && f != "json") throw ConfigError("format must be csv or json");
        c.format = f == "csv" ? Format::csv : Format::json;
      } else if (key == "quadrature_order") {
        c.quadrature_order = v.get<int>();
      } else if (key == "tolerance") {
        c.tolerance = v.get<double>();
      } else if (key == "gamma") {
        c.bank_risk_aversion = values_from_json(v);
      } else if (key == "phi") {
        c.phi_values = values_from_json(v);
      } else if (key == "grid") {
        c.density_grid = values_from_json(v);
      } else if (key == "samples") {
        c.samples = v.get<int>();
      } else if (key == "threads") {
        c.threads = v.get<int>();
      } else if (key == "finite") {
        c.finite = v.get<bool>();
      } else if (key == "selection") {
        c.selection = v.get<std::string>();
      } else {
        throw ConfigError("unknown configuration key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad configuration value: ") + e.what());
  }
}

RunResult run(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  const std::filesystem::path dir(config.output_dir);
  nlohmann::json error;
  Outcome outcome;
  try {
    // Created before validation so that a rejected config still gets error.json.
    if (config.output_dir.empty()) throw ConfigError("output directory must be set");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
      throw ConfigError("cannot create output directory " + dir.string());
    config.validate();
    Writer writer(dir, config.format);
    switch (config.command) {
      case Command::solve: outcome = run_solve(config, writer); break;
      case Command::sweep: outcome = run_sweep(config, writer); break;
      case Command::boundary: outcome = run_boundary(config, writer); break;
      case Command::trajectory: outcome = run_trajectory(config, writer); break;
      case Command::simulate: outcome = run_simulate(config, writer); break;
      case Command::hedge: outcome = run_hedge(config, writer); break;
    }
    result.files = writer.flush();
  } catch (const ConfigError& e) {
    result.exit_code = 2;
    error = {{"kind", e.kind()}, {"message", e.what()}};
  } catch (const NumericalError& e) {
    result.exit_code = 3;
    error = {{"kind", e.kind()}, {"message", e.what()}, {"trace", e.trace()}};
    if (std::isfinite(e.residual())) error["residual"] = e.residual();
  } catch (const Error& e) {
    result.exit_code = 3;
    error = {{"kind", e.kind()}, {"message", e.what()}};
  }
  result.warnings = outcome.warnings;

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!std::filesystem::is_directory(dir)) {
    if (!error.is_null()) std::cerr << "error: " << error["message"].get<std::string>() << '\n';
    return result;
  }
  if (!error.is_null()) {
    error["schema"] = "randecon.error/1";
    error["exit_code"] = result.exit_code;
    write_json(dir / "error.json", error);
    result.files.push_back("error.json");
    std::cerr << "error: " << error["message"].get<std::string>() << '\n';
  }
  nlohmann::json meta;
  meta["schema"] = "randecon.metadata/1";
  meta["command"] = to_string(config.command);
  meta["config"] = to_json(config);
  meta["seed"] = config.model.seed;
  meta["generator"] = std::string(Rng::kName);
  meta["threads"] = resolve_threads(config.threads);
  meta["versions"] = versions();
  meta["wall_time_seconds"] = wall;
  meta["files"] = result.files;
  meta["warnings"] = result.warnings;
  meta["exit_code"] = result.exit_code;
  write_json(dir / "metadata.json", meta);
  result.files.push_back("metadata.json");
  return result;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Equilibria of large random economies: finite-size and saddle-point solvers"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, output_dir, format, n, epsilon, gamma, phi, grid, selection;
  int omega = 0, quadrature = 0, samples = 0, threads = 0;
  double crra = 0.0, spread = 0.0, tolerance = 0.0;
  std::uint64_t seed = 0;
  bool finite = false;

  app.add_option("--config", config_file, "JSON configuration file; flags override it")
      ->check(CLI::ExistingFile);
  auto* o_out = app.add_option("-o,--output-dir", output_dir, "Output directory");
  auto* o_format = app.add_option("--format", format, "csv or json")
                       ->check(CLI::IsMember({"csv", "json"}));
  auto* o_n = app.add_option("--n", n, "Financial complexity N/Omega: value, list or a:b:step");
  auto* o_eps = app.add_option("--epsilon", epsilon, "Risk premium: value, list or a:b:step");
  auto* o_omega = app.add_option("--omega", omega, "Number of states (finite-size commands)");
  auto* o_crra = app.add_option("--crra", crra, "Utility exponent in (0, 1)");
  auto* o_spread = app.add_option("--spread", spread, "Price spread, prices are 1 +- spread");
  auto* o_seed = app.add_option("--seed", seed, "Random seed");
  auto* o_quad = app.add_option("--quadrature-order", quadrature, "Gauss-Hermite order");
  auto* o_tol = app.add_option("--tolerance", tolerance, "Saddle-point residual tolerance");
  auto* o_gamma = app.add_option("--gamma", gamma, "Bank risk aversion: value or list");
  auto* o_phi = app.add_option("--phi", phi, "Target completeness for unbiased hedges");
  auto* o_grid = app.add_option("--grid", grid, "Consumption grid for densities");
  auto* o_samples = app.add_option("--samples", samples, "Monte Carlo samples");
  auto* o_threads = app.add_option("--threads", threads, "Worker threads (0: RANDECON_THREADS)");
  auto* o_finite = app.add_flag("--finite", finite, "solve: also solve one sampled economy");
  auto* o_sel = app.add_option("--selection", selection, "hedge: unbiased or consumer")
                    ->check(CLI::IsMember({"unbiased", "consumer"}));

  std::map<std::string, CLI::App*> subcommands;
  subcommands["solve"] = app.add_subcommand("solve", "Saddle-point solution and consumption density");
  subcommands["sweep"] = app.add_subcommand("sweep", "Saddle-point curves in n, one file per epsilon");
  subcommands["boundary"] = app.add_subcommand("boundary", "Arbitrage boundary n_c(epsilon)");
  subcommands["trajectory"] =
      app.add_subcommand("trajectory", "Endogenous risk-premium trajectories");
  subcommands["simulate"] = app.add_subcommand("simulate", "Finite-size Monte Carlo ensembles");
  subcommands["hedge"] = app.add_subcommand("hedge", "Interbank minimum-variance hedges");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  RunConfig config;
  std::string output_for_error = ".";
  try {
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse " + config_file + ": " + e.what());
      }
      apply_json(doc, config);
    }
    for (const auto& [name, sub] : subcommands)
      if (sub->parsed()) config.command = kCommands.at(name);
    if (o_out->count()) config.output_dir = output_dir;
    if (o_format->count()) config.format = format == "csv" ? Format::csv : Format::json;
    if (o_n->count()) {
      config.n_values = parse_values(n);
      config.model.n_ratio = config.n_values.front();
    }
    if (o_eps->count()) {
      config.epsilon_values = parse_values(epsilon);
      config.model.epsilon = config.epsilon_values.front();
    }
    if (o_omega->count()) config.model.omega_count = omega;
    if (o_crra->count()) config.model.crra_exponent = crra;
    if (o_spread->count()) config.model.price_spread = spread;
    if (o_seed->count()) config.model.seed = seed;
    if (o_quad->count()) config.quadrature_order = quadrature;
    if (o_tol->count()) config.tolerance = tolerance;
    if (o_gamma->count()) config.bank_risk_aversion = parse_values(gamma);
    if (o_phi->count()) config.phi_values = parse_values(phi);
    if (o_grid->count()) config.density_grid = parse_values(grid);
    if (o_samples->count()) config.samples = samples;
    if (o_threads->count()) config.threads = threads;
    if (o_finite->count()) config.finite = finite;
    if (o_sel->count()) config.selection = selection;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  const RunResult result = run(config);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  if (result.exit_code == 0)
    for (const auto& f : result.files)
      std::cout << (std::filesystem::path(config.output_dir) / f).string() << '\n';
  return result.exit_code;
}

}  // namespace randecon
