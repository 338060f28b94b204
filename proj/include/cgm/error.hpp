#pragma once

#include <stdexcept>
#include <string>

namespace cgm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or precondition on sizes/tags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Vector/matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in gradients, losses or parameters.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// step() called on an episode that already reached its horizon.
class EpisodeOverrunError : public Error {
 public:
  using Error::Error;
};

/// Malformed episode handed to the replay buffer.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Sampling requested from an empty replay buffer.
class EmptyStoreError : public Error {
 public:
  using Error::Error;
};

/// Missing or malformed input file (CSV, config, checkpoint).
class InputError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename E>
inline void require(bool condition, const std::string& message) {
  if (!condition) throw E(message);
}

}  // namespace detail
}  // namespace cgm
