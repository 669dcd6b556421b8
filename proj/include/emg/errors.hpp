#pragma once

#include <stdexcept>
#include <string>

namespace emg {

/// Malformed or inconsistent input data. Carries the offending location when known.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
  DataError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what) {}
};

/// Bad configuration or arguments, detected before any compute.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The AR fit cannot proceed: zero residual energy or a perfectly predictable stage.
class DegenerateSignalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(int epoch, const std::string& what)
      : std::runtime_error("diverged at epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

private:
  int epoch_;
};

} // namespace emg
