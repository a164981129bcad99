#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hldet {

/// Violated precondition, malformed request, or inconsistent configuration.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values or a degenerate denominator during evaluation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file content. Carries the byte offset where parsing stopped.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t at)
      : std::runtime_error(msg + " (byte offset " + std::to_string(at) + ")"),
        offset(at) {}
  std::size_t offset = 0;
};

}  // namespace hldet
