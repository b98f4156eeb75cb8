#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agp {

// Operand extents do not line up (matmul inner dims, reshape sizes, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Convolution geometry that cannot be lowered exactly.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong lifecycle state (backward before forward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed on-disk data. Carries the byte offset where parsing stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace agp
