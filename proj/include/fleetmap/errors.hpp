#pragma once

#include <stdexcept>
#include <string>

namespace fleetmap {

// Error taxonomy used across the library. All derive from std::runtime_error
// so callers can catch broadly at the CLI boundary.

struct ParameterError : std::runtime_error {
  explicit ParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RegistrationError : std::runtime_error {
  explicit RegistrationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GraphError : std::runtime_error {
  explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EvaluationError : std::runtime_error {
  explicit EvaluationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Scene graph saw an observation referencing a pose-graph node it does not
// know yet; the caller should retry after the next map update.
struct StalenessError : std::runtime_error {
  explicit StalenessError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unreadable files / wire messages.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fleetmap
