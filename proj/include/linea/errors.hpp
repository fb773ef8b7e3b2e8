#pragma once

#include <stdexcept>
#include <string>

namespace linea {

// Error taxonomy used across the library. The CLI maps these to exit codes,
// so new failure modes should reuse one of the classes below instead of
// throwing std::runtime_error directly.

// Tensor/feature-map extents do not line up.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric input outside the operation's domain (NaN/Inf, bad threshold, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent or impossible configuration (k > pixel count, d % heads != 0).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Persistence failures; `kind` distinguishes the failure so callers and
// tests can tell a bad magic from a truncated payload.
class IoError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, ShapeMismatch, NotFound, Malformed };

  IoError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// A verification suite (gradcheck, fuse-verify) found a violation.
class CheckFailure : public std::runtime_error {
 public:
  explicit CheckFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace linea
