#pragma once

#include <stdexcept>
#include <string>

namespace accsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class InfeasibleEquilibrium : public Error {
 public:
  using Error::Error;
};

class BadHistory : public Error {
 public:
  using Error::Error;
};

class NonFiniteState : public Error {
 public:
  using Error::Error;
};

class DiscretizationUnconverged : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class NoFeasibleCandidate : public Error {
 public:
  using Error::Error;
};

class MissingColumn : public Error {
 public:
  using Error::Error;
};

class NonMonotoneTime : public Error {
 public:
  using Error::Error;
};

class EmptyOverlap : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace accsim
