#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fkdmc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A measure with zero (or non-finite) mass against the potential.
class DegenerateMeasure : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class SizeLimitError : public Error {
 public:
  using Error::Error;
};

/// Raised by selection when a walker weight is not finite and positive.
class WeightError : public Error {
 public:
  WeightError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class SequencingError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// Invalid model or experiment configuration. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class NoReference : public Error {
 public:
  using Error::Error;
};

}  // namespace fkdmc
