#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace solrepair {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Source text that cannot be scanned: unbalanced braces, unterminated
/// comments or strings.
class MalformedSource : public Error {
 public:
  MalformedSource(std::string origin, std::size_t line, std::size_t column,
                  const std::string& what)
      : Error(origin + ":" + std::to_string(line) + ":" +
              std::to_string(column) + ": " + what),
        origin_(std::move(origin)),
        line_(line),
        column_(column) {}

  const std::string& origin() const noexcept { return origin_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string origin_;
  std::size_t line_;
  std::size_t column_;
};

class MalformedRecord : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dense retrieval could not reach its embedding provider.
class RetrievalUnavailable : public Error {
 public:
  using Error::Error;
};

class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

/// The completion model failed to answer (transport, HTTP status, missing
/// scripted entry). Retryable.
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace solrepair
