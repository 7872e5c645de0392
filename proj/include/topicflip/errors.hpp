#pragma once

#include <stdexcept>
#include <string>

namespace topicflip {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data (bad record, bad file format). Carries context
/// such as the offending line number in the message.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid input that violates an integrity rule
/// (duplicate ids, misaligned collections, inconsistent snapshots).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an operation's arguments was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Remote endpoint failure after all retries were exhausted, or a
/// response that cannot be interpreted.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what, int attempts = 0)
      : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_ = 0;
};

}  // namespace topicflip
