#pragma once

#include <stdexcept>
#include <string>

namespace rehab {

// All library failures derive from Error so callers can catch one type at
// the CLI boundary and map the concrete kind to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  explicit DegenerateGeometry(const std::string& what, long frame = -1)
      : Error(frame >= 0 ? what + " (frame " + std::to_string(frame) + ")" : what),
        frame_(frame) {}

  long frame() const noexcept { return frame_; }

 private:
  long frame_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class EndpointError : public Error {
 public:
  EndpointError(int status, std::string body_excerpt)
      : Error("endpoint returned HTTP " + std::to_string(status) + ": " + body_excerpt),
        status_(status),
        body_excerpt_(std::move(body_excerpt)) {}

  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

class OracleError : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

}  // namespace rehab
