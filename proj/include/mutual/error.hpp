#pragma once

#include <stdexcept>
#include <string>

namespace mutual {

// Bad input data: malformed files, unknown ids, invariant violations in
// loaded artifacts. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Caller misuse of an API (shape mismatch, precondition failure).
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace mutual
