#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "agp/errors.hpp"

namespace agp {

struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t size() const { return n * c * h * w; }
  std::size_t image_size() const { return c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

// Dense (n, c, h, w) row-major container. All extents are >= 1.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  explicit Tensor4(Shape4 shape, T fill = T(0));
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : Tensor4(Shape4{n, c, h, w}, fill) {}
  Tensor4(Shape4 shape, std::vector<T> data);

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  // The c*h*w block of one batch entry.
  std::span<T> image(std::size_t i) {
    return std::span<T>(data_).subspan(i * shape_.image_size(), shape_.image_size());
  }
  std::span<const T> image(std::size_t i) const {
    return std::span<const T>(data_).subspan(i * shape_.image_size(), shape_.image_size());
  }

  void fill(T value);
  // Same element count, new extents.
  void reshape(Shape4 shape);

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

// Row-major 2-D matrix. Zero extents are representable so that degenerate
// operands can be rejected by the operations that receive them.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return std::span<T>(data_).subspan(i * cols_, cols_); }
  std::span<const T> row(std::size_t i) const {
    return std::span<const T>(data_).subspan(i * cols_, cols_);
  }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  // Reuses the allocation when the element count allows it. Contents are unspecified.
  void resize(std::size_t rows, std::size_t cols);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Copying reinterpretation of the flat (n,c,h,w) data as rows x cols.
template <typename T>
Matrix<T> view_as_matrix(const Tensor4<T>& t, std::size_t rows, std::size_t cols);

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);

// out = a * b, reusing out's storage. Each output row is accumulated in a fixed
// k order, so the result does not depend on the worker count.
template <typename T>
void matmul_into(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out);

template <typename T>
Matrix<T> transpose(const Matrix<T>& a);

template <typename T>
void transpose_into(const Matrix<T>& a, Matrix<T>& out);

// Largest |a - b| divided by the largest |b| (or 1 when b is all zeros).
template <typename T>
double max_relative_error(std::span<const T> a, std::span<const T> b);

template <typename To, typename From>
Tensor4<To> tensor_cast(const Tensor4<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t.data()[i]);
  return Tensor4<To>(t.shape(), std::move(out));
}

}  // namespace agp
