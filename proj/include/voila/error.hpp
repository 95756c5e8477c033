#pragma once

#include <stdexcept>
#include <string>

namespace voila {

// Base of every domain error raised by the library. The CLI maps these to
// exit code 1; anything else escaping a subcommand is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Marker parse failure. `position` is a byte offset into the annotated input.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at offset " + std::to_string(position) + ")"), position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// A special-token literal found inside user-provided chunk text.
class InjectionError : public Error {
 public:
  using Error::Error;
};

// Offline backend has no entry for the requested key.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Judge output that is not a verdict, even after retries.
class VerdictError : public Error {
 public:
  using Error::Error;
};

// Remote backend failure; callers may retry.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, std::string key, bool retriable = true)
      : Error(what), key_(std::move(key)), retriable_(retriable) {}

  const std::string& key() const noexcept { return key_; }
  bool retriable() const noexcept { return retriable_; }

 private:
  std::string key_;
  bool retriable_;
};

}  // namespace voila
