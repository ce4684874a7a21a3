#pragma once

#include <stdexcept>
#include <string>

namespace hetsep {

/// Base class for every error raised by the library. The category string is
/// what the command-line tool prints as the machine-parsable error prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

/// Invalid configuration, priors, or arguments.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

/// Unusable or inconsistent data (zero-energy clips, bad manifests, unsatisfiable sampling).
class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("data", message) {}
};

/// File-system or format failures.
class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

/// Numerical failures during training (non-finite loss and the like).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

}  // namespace hetsep
