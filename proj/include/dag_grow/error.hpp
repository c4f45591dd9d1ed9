#pragma once

#include <stdexcept>
#include <string>

namespace daggrow {

/// Broad failure category. Each maps onto one process exit code / C API status.
enum class ErrorKind {
  usage,    ///< bad arguments, unknown keys, violated preconditions
  data,     ///< unreadable or malformed input data / documents
  numeric,  ///< non-finite values, failed factorizations
  io,       ///< unwritable output paths
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace daggrow
