#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fhdgm {

/// Failure categories raised by the library. The CLI maps them onto exit codes.
enum class ErrorKind {
  domain,        // argument outside the mathematical domain (inverted interval, latitude)
  range,         // evaluation point outside a basis domain
  shape,         // array length mismatch
  contract,      // precondition on a structural parameter (even Fourier count, ...)
  parameter,     // invalid model or algorithm parameter
  stationarity,  // |g_k| >= 1
  variance,      // non-positive error variance on the observation grid
  lookup,        // unknown station or covariate
  numeric,       // non-finite values, failed factorization
  solver,        // penalized solver did not converge
  data,          // malformed or inconsistent input data
  config,        // invalid configuration
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::range: return "range";
    case ErrorKind::shape: return "shape";
    case ErrorKind::contract: return "contract";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::stationarity: return "stationarity";
    case ErrorKind::variance: return "variance";
    case ErrorKind::lookup: return "lookup";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::solver: return "solver";
    case ErrorKind::data: return "data";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace fhdgm
