#ifndef DYNBPS_COMMON_HPP
#define DYNBPS_COMMON_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace dynbps {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;
using Index = Eigen::Index;

enum class ErrorKind {
  NotPositiveDefinite,
  InvalidShape,
  InvalidPhi,
  InvalidAlpha,
  InvalidMonth,
  NoConvergence,
  InputError,
  DimensionMismatch,
  SchemaError,
  GridError,
  ParseError,
  ConfigError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::InvalidShape: return "InvalidShape";
    case ErrorKind::InvalidPhi: return "InvalidPhi";
    case ErrorKind::InvalidAlpha: return "InvalidAlpha";
    case ErrorKind::InvalidMonth: return "InvalidMonth";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::InputError: return "InputError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::GridError: return "GridError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. The kind is what
/// callers branch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the simplex solver when the iteration budget runs out. Carries
/// the last iterate so callers can decide whether it is usable anyway.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& message, Vector last_iterate,
                     double residual)
      : Error(ErrorKind::NoConvergence, message),
        last_iterate_(std::move(last_iterate)),
        residual_(residual) {}

  const Vector& last_iterate() const noexcept { return last_iterate_; }
  double residual() const noexcept { return residual_; }

 private:
  Vector last_iterate_;
  double residual_;
};

/// Re-raises `e` with `context` prepended to the message, keeping the kind.
[[noreturn]] inline void rethrow_with_context(const Error& e,
                                              const std::string& context) {
  if (auto* nc = dynamic_cast<const NoConvergenceError*>(&e)) {
    throw NoConvergenceError(context + ": " + nc->what(), nc->last_iterate(),
                             nc->residual());
  }
  throw Error(e.kind(), context + ": " + e.what());
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(b.rows()) +
                    "x" + std::to_string(b.cols()) + ", got " +
                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

}  // namespace dynbps

#endif  // DYNBPS_COMMON_HPP
