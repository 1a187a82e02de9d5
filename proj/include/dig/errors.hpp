#pragma once

#include <stdexcept>
#include <string>

namespace dig {

/// Base of every exception the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed something outside an operation's contract.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Filesystem read/write failure; the message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its contents are malformed or truncated.
class CorruptData : public Error {
 public:
  using Error::Error;
};

/// Checkpoint/config incompatibility (format version, model preset).
class Mismatch : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dig
