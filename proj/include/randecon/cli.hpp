#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "randecon/economy.hpp"

namespace randecon {

enum class Command { solve, sweep, boundary, trajectory, simulate, hedge };
enum class Format { csv, json };

struct RunConfig {
  Command command = Command::solve;
  ModelConfig model;
  std::string output_dir = "out";
  Format format = Format::csv;
  int quadrature_order = 64;
  double tolerance = 1e-9;

  // Parameter grids. Empty means the single value in `model`.
  std::vector<double> n_values;
  std::vector<double> epsilon_values;
  std::vector<double> bank_risk_aversion{0.1};
  std::vector<double> phi_values{0.3, 0.5, 0.7};  // hedge, unbiased selection
  std::vector<double> density_grid;               // solve; empty picks one from quantiles

  int samples = 100;
  int threads = 0;  // 0: RANDECON_THREADS or hardware concurrency
  bool finite = false;  // solve: also solve one sampled economy
  std::string selection = "unbiased";  // hedge: unbiased | consumer

  std::vector<double> n_grid() const;
  std::vector<double> epsilon_grid() const;
  // Throws ConfigError.
  void validate() const;
};

struct RunResult {
  int exit_code = 0;
  std::vector<std::string> files;  // relative to output_dir
  std::vector<std::string> warnings;
};

// Runs one command and writes its data files, metadata.json and, on failure,
// error.json into output_dir. Exit codes: 0 success, 2 configuration error,
// 3 numerical failure.
RunResult run(const RunConfig& config);

// "start:stop:step" (inclusive) or a comma list. Throws ConfigError.
std::vector<double> parse_values(const std::string& text);

std::string to_string(Command command);
nlohmann::json to_json(const RunConfig& config);
// Overwrites the fields present in `doc`. Unknown keys are a ConfigError.
void apply_json(const nlohmann::json& doc, RunConfig& config);

// Command-line entry point.
int cli_main(int argc, char** argv);

}  // namespace randecon
