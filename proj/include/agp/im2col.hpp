#pragma once

#include <cstddef>
#include <span>

#include "agp/sparse.hpp"
#include "agp/tensor.hpp"

namespace agp {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  // Output extents. Throw ShapeError unless (extent + 2*padding - kernel) is a
  // non-negative multiple of stride.
  std::size_t out_h(std::size_t h) const;
  std::size_t out_w(std::size_t w) const;
  // in_channels * kernel_h * kernel_w: rows of the lowered patch matrix.
  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  void validate() const;
};

// Span-level kernels over one image of `spec.in_channels x h x w`. The Tensor4
// overloads below wrap these for single-image tensors.
//
// Patch matrix layout follows Caffe: row index (c, kh, kw), column index (oh, ow).

template <typename T>
void im2col(std::span<const T> image, std::size_t h, std::size_t w, const ConvSpec& spec, Matrix<T>& out);

// Transposed patch matrix, shape (ho*wo, c*kh*kw): one receptive field per row.
template <typename T>
void im2col_rows(std::span<const T> image, std::size_t h, std::size_t w, const ConvSpec& spec,
                 Matrix<T>& out);

// Scatter-add adjoint of im2col. `image` is overwritten.
template <typename T>
void col2im(const Matrix<T>& m, const ConvSpec& spec, std::size_t h, std::size_t w, std::span<T> image);

// `grad` is one image of out_channels x ho x wo. Produces the CSR form of its
// (ho*wo, out_channels) transpose in a single pass.
template <typename T>
void im2col_trans(std::span<const T> grad, std::size_t out_channels, std::size_t positions, CsrMatrix<T>& out);

// col2im of m^T without materialising the transpose. Per-pixel summation order
// matches col2im exactly, so the results are bitwise equal.
template <typename T>
void col2im_trans(const Matrix<T>& m, const ConvSpec& spec, std::size_t h, std::size_t w, std::span<T> image);

template <typename T>
Matrix<T> im2col(const Tensor4<T>& image, const ConvSpec& spec);
template <typename T>
Tensor4<T> col2im(const Matrix<T>& m, const ConvSpec& spec, std::size_t h, std::size_t w);
template <typename T>
CsrMatrix<T> im2col_trans(const Tensor4<T>& grad, const ConvSpec& spec);
template <typename T>
Tensor4<T> col2im_trans(const Matrix<T>& m, const ConvSpec& spec, std::size_t h, std::size_t w);

}  // namespace agp
