#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace randecon {

// Base class for every failure raised by the library. `kind()` is a stable
// machine-readable tag used by the CLI error record.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

// Iterative method failed to reach its tolerance. Carries the residual history.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double residual,
                 std::vector<double> trace = {})
      : Error(what), residual_(residual), trace_(std::move(trace)) {}
  const char* kind() const noexcept override { return "numerical"; }
  double residual() const noexcept { return residual_; }
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  double residual_;
  std::vector<double> trace_;
};

// The consumer problem has no finite maximizer: an arbitrage portfolio exists.
class UnboundedError : public Error {
 public:
  UnboundedError(const std::string& what, std::vector<double> witness)
      : Error(what), witness_(std::move(witness)) {}
  const char* kind() const noexcept override { return "unbounded"; }
  const std::vector<double>& witness() const noexcept { return witness_; }

 private:
  std::vector<double> witness_;
};

class IllConditionedError : public Error {
 public:
  IllConditionedError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  const char* kind() const noexcept override { return "ill_conditioned"; }
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, int null_dimension)
      : Error(what), null_dimension_(null_dimension) {}
  const char* kind() const noexcept override { return "rank_deficient"; }
  int null_dimension() const noexcept { return null_dimension_; }

 private:
  int null_dimension_;
};

class EmptyStatisticsError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "empty_statistics"; }
};

}  // namespace randecon
