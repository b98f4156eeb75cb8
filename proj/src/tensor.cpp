#include "agp/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "agp/parallel.hpp"

namespace agp {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

namespace {
void check_extents(const Shape4& s) {
  if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
    throw DimensionError("tensor extents must be >= 1, got " + s.str());
  }
}
}  // namespace

template <typename T>
Tensor4<T>::Tensor4(Shape4 shape, T fill) : shape_(shape) {
  check_extents(shape_);
  data_.assign(shape_.size(), fill);
}

template <typename T>
Tensor4<T>::Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
  }
}

template <typename T>
void Tensor4<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void Tensor4<T>::reshape(Shape4 shape) {
  check_extents(shape);
  if (shape.size() != data_.size()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  shape_ = shape;
}

template <typename T>
Matrix<T>::Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

template <typename T>
Matrix<T> Matrix<T>::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
  return m;
}

template <typename T>
void Matrix<T>::resize(std::size_t rows, std::size_t cols) {
  rows_ = rows;
  cols_ = cols;
  data_.resize(rows * cols);
}

template <typename T>
Matrix<T> view_as_matrix(const Tensor4<T>& t, std::size_t rows, std::size_t cols) {
  if (rows * cols != t.size()) {
    throw DimensionError("cannot view " + t.shape().str() + " as " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  return Matrix<T>(rows, cols, t.storage());
}

template <typename T>
void matmul_into(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  if (a.cols() == 0) throw DimensionError("matmul: empty inner dimension");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  out.resize(m, n);
  const T* bp = b.data().data();
  T* cp = out.data().data();
  const T* ap = a.data().data();
  parallel_for(m, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* crow = cp + i * n;
      std::fill(crow, crow + n, T(0));
      const T* arow = ap + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = bp + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out;
  matmul_into(a, b, out);
  return out;
}

template <typename T>
void transpose_into(const Matrix<T>& a, Matrix<T>& out) {
  out.resize(a.cols(), a.rows());
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < a.rows(); i0 += kBlock) {
    const std::size_t i1 = std::min(a.rows(), i0 + kBlock);
    for (std::size_t j0 = 0; j0 < a.cols(); j0 += kBlock) {
      const std::size_t j1 = std::min(a.cols(), j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out(j, i) = a(i, j);
    }
  }
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out;
  transpose_into(a, out);
  return out;
}

template <typename T>
double max_relative_error(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    scale = std::max(scale, std::abs(static_cast<double>(b[i])));
  }
  return diff / (scale > 0.0 ? scale : 1.0);
}

#define AGP_INSTANTIATE(T)                                                           \
  template class Tensor4<T>;                                                         \
  template class Matrix<T>;                                                          \
  template Matrix<T> view_as_matrix(const Tensor4<T>&, std::size_t, std::size_t);    \
  template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);                     \
  template void matmul_into(const Matrix<T>&, const Matrix<T>&, Matrix<T>&);         \
  template Matrix<T> transpose(const Matrix<T>&);                                    \
  template void transpose_into(const Matrix<T>&, Matrix<T>&);                        \
  template double max_relative_error(std::span<const T>, std::span<const T>);

AGP_INSTANTIATE(float)
AGP_INSTANTIATE(double)
#undef AGP_INSTANTIATE

}  // namespace agp
