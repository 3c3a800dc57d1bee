#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ecocruise {

/// Argument outside the mathematical domain of a model equation (e.g. V <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A forward step of the plant produced a non-positive or non-finite velocity.
class StepFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line/row number when known.
class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& what, std::size_t row = 0)
      : std::runtime_error(row ? what + " (row " + std::to_string(row) + ")" : what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, double position_m)
      : std::runtime_error(what + " at position " + std::to_string(position_m) + " m"),
        position_m_(position_m) {}
  double position_m() const noexcept { return position_m_; }

 private:
  double position_m_;
};

}  // namespace ecocruise
