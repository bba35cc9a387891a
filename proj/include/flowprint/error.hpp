#pragma once

#include <stdexcept>
#include <string>

namespace flowprint {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A phase plan whose slowdown is not strictly below the flow rate, or whose
/// phases do not have positive length.
class InfeasiblePlanError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent experiment configuration (validation, exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated, or wrong-version codebook file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file that parses but breaks a codebook invariant (e.g. duplicate index).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An internal audit (packet conservation, FIFO order) failed during a run.
class AuditError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail
}  // namespace flowprint
