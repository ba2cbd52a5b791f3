#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace sensex {

/// Base of every error the toolkit throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (bad counts, empty corpus, inconsistent boxes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Raised when integration produces a non-finite or runaway state. The
/// finite prefix computed so far is kept for inspection.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string what, std::vector<Eigen::VectorXd> prefix)
      : Error(std::move(what)), prefix_(std::move(prefix)) {}

  [[nodiscard]] const std::vector<Eigen::VectorXd>& prefix() const noexcept {
    return prefix_;
  }

 private:
  std::vector<Eigen::VectorXd> prefix_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace sensex
