#pragma once

#include <stdexcept>
#include <string>

namespace hord {

// Every error raised by the library derives from Error. The category maps
// one-to-one onto the status codes of the C API and the CLI exit codes.
enum class ErrorKind { usage = 1, io = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Contract violations: bad shapes, bad arguments, infeasible configurations.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

// Missing files, bad magic, truncated containers.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::io, what) {}
};

// Non-finite values, divergence.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

}  // namespace hord
