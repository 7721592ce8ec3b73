#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ivope {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short machine-readable category, echoed in CLI error JSON.
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_error"; }
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse_error"; }

 private:
  std::size_t line_;
};

/// Singular, ill-conditioned or indefinite linear systems.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& message, double condition_estimate)
      : Error(message), condition_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_; }
  const char* kind() const noexcept override { return "numerical_error"; }

 private:
  double condition_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "convergence_error"; }
};

/// A training run produced a non-finite loss or a degenerate model.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& message, std::size_t step)
      : Error(message + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }
  const char* kind() const noexcept override { return "training_aborted"; }

 private:
  std::size_t step_;
};

/// A failure inside one seed of an experiment; keeps the original category.
class SeedFailure : public Error {
 public:
  SeedFailure(std::size_t seed_index, const std::string& kind, const std::string& message)
      : Error("seed " + std::to_string(seed_index) + ": " + message), seed_index_(seed_index), kind_(kind) {}
  std::size_t seed_index() const noexcept { return seed_index_; }
  const char* kind() const noexcept override { return kind_.c_str(); }

 private:
  std::size_t seed_index_;
  std::string kind_;
};

}  // namespace ivope
