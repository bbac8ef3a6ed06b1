#pragma once

#include <stdexcept>
#include <string>

namespace promptscape {

// Base for every error raised by the library. The CLI maps the concrete
// kind to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data, failed invariant, or violated precondition (exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file content; message carries "path:line: reason".
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& reason)
      : ValidationError(source + ":" + std::to_string(line) + ": " + reason), line_(line) {}
  explicit ParseError(const std::string& reason) : ValidationError(reason) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Transport or protocol failure talking to a model service (exit code 3).
class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}

  // HTTP status when the failure came from a response, 0 otherwise.
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace promptscape
