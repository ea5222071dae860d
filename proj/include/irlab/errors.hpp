#pragma once

#include <stdexcept>
#include <string>

namespace irlab {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// State enumeration would exceed the configured state cap.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

/// Occupancy (or another (1-gamma)-normalized quantity) requested at gamma = 1.
class GammaOne : public Error {
 public:
  using Error::Error;
};

/// Discounted weighting requested where the discount makes it undefined.
class GammaUnsupported : public Error {
 public:
  using Error::Error;
};

class NonPositiveBeta : public Error {
 public:
  using Error::Error;
};

/// Reference policy assigns zero probability to an action the solver needs.
class ZeroReferenceProbability : public Error {
 public:
  using Error::Error;
};

/// A policy assigns zero probability to an evaluated token.
class ZeroProbability : public Error {
 public:
  using Error::Error;
};

/// A prompt admits fewer than two distinct terminal responses.
class DegeneratePrompt : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

/// A training step produced a non-finite loss; message carries diagnostics.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class MissingCheckpoint : public Error {
 public:
  using Error::Error;
};

/// Config file problem; message names the offending section/field and line.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace irlab
