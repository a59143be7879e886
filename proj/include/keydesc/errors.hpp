#ifndef KEYDESC_ERRORS_HPP
#define KEYDESC_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace keydesc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A JSONL line that could not be parsed. Carries the 1-based line number.
struct ParseError : Error {
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A record that parsed as JSON but is missing or mistypes a required field.
struct SchemaError : Error {
  SchemaError(std::size_t line, const std::string& field)
      : Error("line " + std::to_string(line) + ": schema error in field '" + field + "'"),
        line_(line),
        field_(field) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

struct ConfigError : Error {
  using Error::Error;
};

struct PreconditionError : Error {
  using Error::Error;
};

/// Transport failure talking to a model backend, after retries.
struct BackendError : Error {
  BackendError(const std::string& endpoint, const std::string& what)
      : Error(endpoint + ": " + what), endpoint_(endpoint) {}
  const std::string& endpoint() const noexcept { return endpoint_; }

 private:
  std::string endpoint_;
};

/// A backend response that does not match the /v1 schema.
struct ProtocolError : Error {
  ProtocolError(const std::string& endpoint, const std::string& field)
      : Error(endpoint + ": protocol error in field '" + field + "'"),
        endpoint_(endpoint),
        field_(field) {}
  const std::string& endpoint() const noexcept { return endpoint_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string endpoint_;
  std::string field_;
};

}  // namespace keydesc

#endif  // KEYDESC_ERRORS_HPP
