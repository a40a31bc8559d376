#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace fdisim {

struct Trajectory;

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid parameters, dimension mismatches, malformed configuration.
/// Message carries the offending field path where one exists.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

/// API misuse: stepping a finished episode, reading the cumulative reward
/// mid-episode, out-of-range action indices.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what) {}
};

/// File read/write failure; message includes the path.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

/// A state or derivative component left the trusted numeric range
/// (non-finite, or magnitude above the overflow limit).
class NumericOverflowError : public Error {
 public:
  NumericOverflowError(const std::string& what, std::size_t component)
      : Error(what), component_(component) {}

  /// Index of the offending state/derivative component (bus index for
  /// per-bus quantities).
  [[nodiscard]] std::size_t component() const noexcept { return component_; }

  /// Simulation step at which the overflow occurred, when known.
  [[nodiscard]] const std::optional<std::size_t>& step() const noexcept { return step_; }
  void set_step(std::size_t step) { step_ = step; }

  /// States integrated before the overflow, attached by simulate() so the
  /// aborted run can still be inspected.
  [[nodiscard]] const std::shared_ptr<const Trajectory>& partial_trajectory() const noexcept {
    return partial_;
  }
  void set_partial_trajectory(std::shared_ptr<const Trajectory> partial) {
    partial_ = std::move(partial);
  }

 private:
  std::size_t component_;
  std::optional<std::size_t> step_;
  std::shared_ptr<const Trajectory> partial_;
};

/// Power-flow equilibrium could not be solved (infeasible injections or
/// Newton failure).
class EquilibriumError : public Error {
 public:
  explicit EquilibriumError(const std::string& what) : Error(what) {}
};

}  // namespace fdisim
