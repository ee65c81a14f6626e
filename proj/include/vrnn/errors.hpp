#ifndef VRNN_ERRORS_HPP
#define VRNN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vrnn {

// Shape/dimension mismatch between tensors or layers.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input outside the mathematical domain of an op (log of non-positive, sigma <= 0).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (non-scalar loss passed to backward, family mismatch).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file. `where` carries a byte offset or line number.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, long long where)
      : std::runtime_error(msg + " (at " + std::to_string(where) + ")"), offset(where) {}
  long long offset;
};

// Bad container magic/version or truncated payload.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or command-line usage.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or other numeric failure during training/evaluation.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vrnn

#endif
