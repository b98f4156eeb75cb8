#include "agp/im2col.hpp"

#include <algorithm>
#include <string>

namespace agp {

namespace {

std::size_t out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                       const char* axis) {
  if (stride == 0) throw ShapeError("conv: stride must be >= 1");
  const std::size_t padded = in + 2 * padding;
  if (kernel == 0 || padded < kernel) {
    throw ShapeError(std::string("conv: kernel larger than padded ") + axis + " extent");
  }
  if ((padded - kernel) % stride != 0) {
    throw ShapeError(std::string("conv: (") + axis + " + 2*padding - kernel) = " +
                     std::to_string(padded - kernel) + " is not divisible by stride " +
                     std::to_string(stride));
  }
  return (padded - kernel) / stride + 1;
}

void check_single(const Shape4& s, std::size_t channels, const char* what) {
  if (s.n != 1) throw DimensionError(std::string(what) + ": expected a single image, got " + s.str());
  if (s.c != channels) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(channels) +
                         " channels, got " + s.str());
  }
}

}  // namespace

std::size_t ConvSpec::out_h(std::size_t h) const { return out_extent(h, kernel_h, stride, padding, "height"); }
std::size_t ConvSpec::out_w(std::size_t w) const { return out_extent(w, kernel_w, stride, padding, "width"); }

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ShapeError("conv: channel counts must be >= 1");
  if (kernel_h == 0 || kernel_w == 0) throw ShapeError("conv: kernel extents must be >= 1");
  if (stride == 0) throw ShapeError("conv: stride must be >= 1");
}

template <typename T>
void im2col(std::span<const T> image, std::size_t h, std::size_t w, const ConvSpec& spec, Matrix<T>& out) {
  const std::size_t ho = spec.out_h(h);
  const std::size_t wo = spec.out_w(w);
  if (image.size() != spec.in_channels * h * w) throw DimensionError("im2col: image size mismatch");
  out.resize(spec.patch_size(), ho * wo);
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.in_channels; ++c) {
    const T* plane = image.data() + c * h * w;
    for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < spec.kernel_w; ++kw, ++row) {
        T* dst = out.row(row).data();
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(kh);
          T* d = dst + oh * wo;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(d, d + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(y) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow) * stride - pad + static_cast<std::ptrdiff_t>(kw);
            d[ow] = (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[x];
          }
        }
      }
    }
  }
}

template <typename T>
void im2col_rows(std::span<const T> image, std::size_t h, std::size_t w, const ConvSpec& spec,
                 Matrix<T>& out) {
  const std::size_t ho = spec.out_h(h);
  const std::size_t wo = spec.out_w(w);
  if (image.size() != spec.in_channels * h * w) throw DimensionError("im2col_rows: image size mismatch");
  const std::size_t k = spec.patch_size();
  out.resize(ho * wo, k);
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
  for (std::size_t oh = 0; oh < ho; ++oh) {
    for (std::size_t ow = 0; ow < wo; ++ow) {
      T* dst = out.row(oh * wo + ow).data();
      for (std::size_t c = 0; c < spec.in_channels; ++c) {
        const T* plane = image.data() + c * h * w;
        for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(kh);
          const bool row_ok = y >= 0 && y < static_cast<std::ptrdiff_t>(h);
          for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow) * stride - pad + static_cast<std::ptrdiff_t>(kw);
            const bool ok = row_ok && x >= 0 && x < static_cast<std::ptrdiff_t>(w);
            *dst++ = ok ? plane[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Matrix<T>& m, const ConvSpec& spec, std::size_t h, std::size_t w, std::span<T> image) {
  const std::size_t ho = spec.out_h(h);
  const std::size_t wo = spec.out_w(w);
  if (m.rows() != spec.patch_size() || m.cols() != ho * wo) {
    throw DimensionError("col2im: expected " + std::to_string(spec.patch_size()) + "x" +
                         std::to_string(ho * wo) + " matrix, got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
  if (image.size() != spec.in_channels * h * w) throw DimensionError("col2im: image size mismatch");
  std::fill(image.begin(), image.end(), T(0));
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.in_channels; ++c) {
    T* plane = image.data() + c * h * w;
    for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < spec.kernel_w; ++kw, ++row) {
        const T* src = m.row(row).data();
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(kh);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = plane + static_cast<std::size_t>(y) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow) * stride - pad + static_cast<std::ptrdiff_t>(kw);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(w)) dst[x] += src[oh * wo + ow];
          }
        }
      }
    }
  }
}

template <typename T>
void im2col_trans(std::span<const T> grad, std::size_t out_channels, std::size_t positions, CsrMatrix<T>& out) {
  if (grad.size() != out_channels * positions) throw DimensionError("im2col_trans: gradient size mismatch");
  out.rows = positions;
  out.cols = out_channels;
  out.row_ptr.assign(positions + 1, 0);
  for (std::size_t c = 0; c < out_channels; ++c) {
    const T* g = grad.data() + c * positions;
    for (std::size_t pos = 0; pos < positions; ++pos)
      if (g[pos] != T(0)) ++out.row_ptr[pos + 1];
  }
  for (std::size_t pos = 0; pos < positions; ++pos) out.row_ptr[pos + 1] += out.row_ptr[pos];
  out.col_idx.resize(out.row_ptr.back());
  out.values.resize(out.row_ptr.back());
  // row_ptr doubles as the fill cursor; shifted back afterwards.
  for (std::size_t c = 0; c < out_channels; ++c) {
    const T* g = grad.data() + c * positions;
    for (std::size_t pos = 0; pos < positions; ++pos) {
      if (g[pos] != T(0)) {
        const std::size_t p = out.row_ptr[pos]++;
        out.col_idx[p] = static_cast<std::uint32_t>(c);
        out.values[p] = g[pos];
      }
    }
  }
  for (std::size_t pos = positions; pos > 0; --pos) out.row_ptr[pos] = out.row_ptr[pos - 1];
  out.row_ptr[0] = 0;
}

template <typename T>
void col2im_trans(const Matrix<T>& m, const ConvSpec& spec, std::size_t h, std::size_t w, std::span<T> image) {
  const std::size_t ho = spec.out_h(h);
  const std::size_t wo = spec.out_w(w);
  const std::size_t k = spec.patch_size();
  if (m.rows() != ho * wo || m.cols() != k) {
    throw DimensionError("col2im_trans: expected " + std::to_string(ho * wo) + "x" + std::to_string(k) +
                         " matrix, got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  if (image.size() != spec.in_channels * h * w) throw DimensionError("col2im_trans: image size mismatch");
  std::fill(image.begin(), image.end(), T(0));
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);
  const T* base = m.data().data();
  std::size_t col = 0;
  for (std::size_t c = 0; c < spec.in_channels; ++c) {
    T* plane = image.data() + c * h * w;
    for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < spec.kernel_w; ++kw, ++col) {
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(kh);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = plane + static_cast<std::size_t>(y) * w;
          const T* src = base + (oh * wo) * k + col;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow) * stride - pad + static_cast<std::ptrdiff_t>(kw);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(w)) dst[x] += src[ow * k];
          }
        }
      }
    }
  }
}

template <typename T>
Matrix<T> im2col(const Tensor4<T>& image, const ConvSpec& spec) {
  check_single(image.shape(), spec.in_channels, "im2col");
  Matrix<T> out;
  im2col(image.data(), image.h(), image.w(), spec, out);
  return out;
}

template <typename T>
Tensor4<T> col2im(const Matrix<T>& m, const ConvSpec& spec, std::size_t h, std::size_t w) {
  Tensor4<T> out(1, spec.in_channels, h, w);
  col2im(m, spec, h, w, out.data());
  return out;
}

template <typename T>
CsrMatrix<T> im2col_trans(const Tensor4<T>& grad, const ConvSpec& spec) {
  check_single(grad.shape(), spec.out_channels, "im2col_trans");
  CsrMatrix<T> out;
  im2col_trans(grad.data(), spec.out_channels, grad.h() * grad.w(), out);
  return out;
}

template <typename T>
Tensor4<T> col2im_trans(const Matrix<T>& m, const ConvSpec& spec, std::size_t h, std::size_t w) {
  Tensor4<T> out(1, spec.in_channels, h, w);
  col2im_trans(m, spec, h, w, out.data());
  return out;
}

#define AGP_INSTANTIATE(T)                                                                                  \
  template void im2col(std::span<const T>, std::size_t, std::size_t, const ConvSpec&, Matrix<T>&);         \
  template void im2col_rows(std::span<const T>, std::size_t, std::size_t, const ConvSpec&, Matrix<T>&);    \
  template void col2im(const Matrix<T>&, const ConvSpec&, std::size_t, std::size_t, std::span<T>);         \
  template void im2col_trans(std::span<const T>, std::size_t, std::size_t, CsrMatrix<T>&);                 \
  template void col2im_trans(const Matrix<T>&, const ConvSpec&, std::size_t, std::size_t, std::span<T>);   \
  template Matrix<T> im2col(const Tensor4<T>&, const ConvSpec&);                                           \
  template Tensor4<T> col2im(const Matrix<T>&, const ConvSpec&, std::size_t, std::size_t);                 \
  template CsrMatrix<T> im2col_trans(const Tensor4<T>&, const ConvSpec&);                                  \
  template Tensor4<T> col2im_trans(const Matrix<T>&, const ConvSpec&, std::size_t, std::size_t);

AGP_INSTANTIATE(float)
AGP_INSTANTIATE(double)
#undef AGP_INSTANTIATE

}  // namespace agp
