#pragma once

#include <stdexcept>
#include <string>

namespace laminar {

enum class ErrorKind {
  parameter,
  geometry,
  domain,
  format,
  conversion,
  io,
  data,
  topology,
  stage,
  convergence,
  usage,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace laminar
