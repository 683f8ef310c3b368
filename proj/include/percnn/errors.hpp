#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace percnn {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid extents too small or incompatible with a stencil/padding width.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Channel counts or extents of two operands disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument violates an operation contract (bad mode, even filter, ...).
class SpecError : public Error {
 public:
  using Error::Error;
};

/// A time integrator or rollout produced a non-finite or runaway state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Unreadable/unwritable file or malformed binary payload.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (unknown key, unparsable value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Network structure that cannot be expanded symbolically.
class RoleError : public Error {
 public:
  using Error::Error;
};

}  // namespace percnn
