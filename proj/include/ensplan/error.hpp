#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ensplan {

/// Base of every error raised by the library. Callers that only need a
/// diagnostic can catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfDomain : public Error {
 public:
  OutOfDomain(std::string axis, double value, double lo, double hi);
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, std::string reason);
  std::uint64_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::uint64_t offset_;
  std::string reason_;
};

class BadMass : public Error {
 public:
  using Error::Error;
};

class BadLevel : public Error {
 public:
  using Error::Error;
};

class UnflyableLeg : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class Infeasible : public Error {
 public:
  using Error::Error;
};

class UnknownRoute : public Error {
 public:
  using Error::Error;
};

class NothingToSelect : public Error {
 public:
  using Error::Error;
};

class EmptyVector : public Error {
 public:
  using Error::Error;
};

class TooFewSamples : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NoVariance : public Error {
 public:
  using Error::Error;
};

class NoFeasibleSchedule : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ensplan
