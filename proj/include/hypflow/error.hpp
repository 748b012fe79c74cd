#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hypflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point violates r * |x|^2 < 1.
class OutsideBallError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be symmetric positive definite is not.
class NonSpdError : public Error {
 public:
  NonSpdError(const std::string& what, std::ptrdiff_t node = -1)
      : Error(what), node_(node) {}
  std::ptrdiff_t node() const { return node_; }

 private:
  std::ptrdiff_t node_;
};

/// Malformed grid or mismatched grids.
class GridError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation is not met (epsilon gate,
/// invalid configuration, shift constraints).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Time stepping produced NaN or lost positive definiteness.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, std::ptrdiff_t node)
      : Error(what), node_(node) {}
  std::ptrdiff_t node() const { return node_; }

 private:
  std::ptrdiff_t node_;
};

/// File parsing failure; `offset` is the byte (binary) or line (text) position.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace hypflow
