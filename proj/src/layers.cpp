#include "agp/layers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace agp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
Shape4 conv_output_shape(const ConvSpec& spec, const Shape4& in) {
  return Shape4{in.n, spec.out_channels, spec.out_h(in.h), spec.out_w(in.w)};
}

template <typename T>
void check_grad_shape(const ConvSpec& spec, const Tensor4<T>& d_o, const Shape4& input_shape, const char* what) {
  const Shape4 expected = conv_output_shape<T>(spec, input_shape);
  if (d_o.shape() != expected) {
    throw DimensionError(std::string(what) + ": gradient shape " + d_o.shape().str() + ", expected " +
                         expected.str());
  }
}

template <typename T>
void add_into(Matrix<T>& acc, const Matrix<T>& x) {
  T* a = acc.data().data();
  const T* b = x.data().data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

}  // namespace

// ---- Convolution backward kernels ------------------------------------------

template <typename T>
Tensor4<T> conv_backward_data_sparse(const Matrix<T>& weights, const ConvSpec& spec, const Tensor4<T>& d_o,
                                     const Shape4& input_shape) {
  check_grad_shape(spec, d_o, input_shape, "conv_backward_data");
  Tensor4<T> d_i(input_shape);
  const std::size_t positions = d_o.h() * d_o.w();
  CsrMatrix<T> grad_t;
  Matrix<T> cols;
  for (std::size_t n = 0; n < d_o.n(); ++n) {
    im2col_trans(d_o.image(n), spec.out_channels, positions, grad_t);
    sdmm_into(grad_t, weights, cols);
    col2im_trans(cols, spec, input_shape.h, input_shape.w, d_i.image(n));
  }
  return d_i;
}

template <typename T>
Tensor4<T> conv_backward_data_dense(const Matrix<T>& weights, const ConvSpec& spec, const Tensor4<T>& d_o,
                                    const Shape4& input_shape) {
  check_grad_shape(spec, d_o, input_shape, "conv_backward_data");
  Tensor4<T> d_i(input_shape);
  const std::size_t positions = d_o.h() * d_o.w();
  const Matrix<T> weights_t = transpose(weights);
  Matrix<T> grad(spec.out_channels, positions);
  Matrix<T> cols;
  for (std::size_t n = 0; n < d_o.n(); ++n) {
    const auto img = d_o.image(n);
    std::copy(img.begin(), img.end(), grad.data().begin());
    matmul_into(weights_t, grad, cols);
    col2im(cols, spec, input_shape.h, input_shape.w, d_i.image(n));
  }
  return d_i;
}

template <typename T>
Matrix<T> conv_backward_weights_sparse(const ConvSpec& spec, const Tensor4<T>& input, const Tensor4<T>& d_o) {
  check_grad_shape(spec, d_o, input.shape(), "conv_backward_weights");
  const std::size_t positions = d_o.h() * d_o.w();
  Matrix<T> d_w(spec.out_channels, spec.patch_size());
  CsrMatrix<T> grad;
  Matrix<T> patches;
  Matrix<T> partial;
  for (std::size_t n = 0; n < d_o.n(); ++n) {
    dense_to_csr_into(d_o.image(n), spec.out_channels, positions, grad);
    if (grad.nnz() == 0) continue;
    im2col_rows(input.image(n), input.h(), input.w(), spec, patches);
    sdmm_into(grad, patches, partial);
    add_into(d_w, partial);
  }
  return d_w;
}

template <typename T>
Matrix<T> conv_backward_weights_dense(const ConvSpec& spec, const Tensor4<T>& input, const Tensor4<T>& d_o) {
  check_grad_shape(spec, d_o, input.shape(), "conv_backward_weights");
  const std::size_t positions = d_o.h() * d_o.w();
  Matrix<T> d_w(spec.out_channels, spec.patch_size());
  Matrix<T> grad(spec.out_channels, positions);
  Matrix<T> patches;
  Matrix<T> partial;
  for (std::size_t n = 0; n < d_o.n(); ++n) {
    const auto img = d_o.image(n);
    std::copy(img.begin(), img.end(), grad.data().begin());
    im2col_rows(input.image(n), input.h(), input.w(), spec, patches);
    matmul_into(grad, patches, partial);
    add_into(d_w, partial);
  }
  return d_w;
}

// ---- Conv2d ----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::string name, ConvSpec spec, bool with_bias)
    : Layer<T>(std::move(name)),
      spec_(spec),
      with_bias_(with_bias),
      weights_(spec.out_channels, spec.patch_size()),
      bias_(spec.out_channels, T(0)),
      weight_grad_(spec.out_channels, spec.patch_size()),
      bias_grad_(spec.out_channels, T(0)) {
  spec_.validate();
}

template <typename T>
Tensor4<T> Conv2d<T>::forward(const Tensor4<T>& x, Mode mode) {
  if (x.c() != spec_.in_channels) {
    throw DimensionError(this->name() + ": expected " + std::to_string(spec_.in_channels) + " input channels, got " +
                         x.shape().str());
  }
  const Shape4 out_shape = conv_output_shape<T>(spec_, x.shape());
  Tensor4<T> out(out_shape);
  const std::size_t positions = out_shape.h * out_shape.w;
  Matrix<T> cols;
  Matrix<T> result;
  for (std::size_t n = 0; n < x.n(); ++n) {
    im2col(x.image(n), x.h(), x.w(), spec_, cols);
    matmul_into(weights_, cols, result);
    auto dst = out.image(n);
    for (std::size_t c = 0; c < spec_.out_channels; ++c) {
      const T b = with_bias_ ? bias_[c] : T(0);
      const T* src = result.row(c).data();
      T* d = dst.data() + c * positions;
      for (std::size_t i = 0; i < positions; ++i) d[i] = src[i] + b;
    }
  }
  if (mode == Mode::train) {
    cached_input_ = x;
  } else {
    cached_input_.reset();
  }
  return out;
}

template <typename T>
Tensor4<T> Conv2d<T>::backward_data(const Tensor4<T>& d_o) {
  if (!cached_input_) throw StateError(this->name() + ": backward_data called without a training forward");
  const auto start = Clock::now();
  Tensor4<T> d_i = path_ == BackwardPath::sparse
                       ? conv_backward_data_sparse(weights_, spec_, d_o, cached_input_->shape())
                       : conv_backward_data_dense(weights_, spec_, d_o, cached_input_->shape());
  times_.agbp_seconds += seconds_since(start);
  return d_i;
}

template <typename T>
void Conv2d<T>::backward_weights(const Tensor4<T>& d_o) {
  if (!cached_input_) throw StateError(this->name() + ": backward_weights called without a training forward");
  const auto start = Clock::now();
  // Copy into the existing buffer: optimizers hold spans into it.
  const Matrix<T> d_w = path_ == BackwardPath::sparse ? conv_backward_weights_sparse(spec_, *cached_input_, d_o)
                                                      : conv_backward_weights_dense(spec_, *cached_input_, d_o);
  std::copy(d_w.data().begin(), d_w.data().end(), weight_grad_.data().begin());
  std::fill(bias_grad_.begin(), bias_grad_.end(), T(0));
  if (with_bias_) {
    const std::size_t positions = d_o.h() * d_o.w();
    for (std::size_t n = 0; n < d_o.n(); ++n) {
      const auto img = d_o.image(n);
      for (std::size_t c = 0; c < spec_.out_channels; ++c) {
        T sum = T(0);
        for (std::size_t i = 0; i < positions; ++i) sum += img[c * positions + i];
        bias_grad_[c] += sum;
      }
    }
  }
  times_.wgc_seconds += seconds_since(start);
}

template <typename T>
Tensor4<T> Conv2d<T>::backward(const Tensor4<T>& d_o) {
  last_size_ = d_o.size();
  last_nnz_ = static_cast<std::size_t>(std::count_if(d_o.data().begin(), d_o.data().end(),
                                                     [](T v) { return v != T(0); }));
  backward_weights(d_o);
  if (!input_grad_) return Tensor4<T>(cached_input_->shape());
  return backward_data(d_o);
}

template <typename T>
void Conv2d<T>::collect_params(std::vector<ParamRef<T>>& out) {
  out.push_back({this->name() + ".weight", weights_.data(), weight_grad_.data(), true});
  if (with_bias_) out.push_back({this->name() + ".bias", bias_, bias_grad_, false});
}

// ---- PruneLayer ------------------------------------------------------------

template <typename T>
PruneLayer<T>::PruneLayer(std::string name, PruneConfig cfg, std::uint64_t layer_id)
    : Layer<T>(std::move(name)), cfg_(cfg), layer_id_(layer_id) {
  cfg_.validate();
}

template <typename T>
void PruneLayer<T>::set_rate(double p) {
  PruneConfig next = cfg_;
  next.p = p;
  next.validate();
  cfg_ = next;
}

template <typename T>
Tensor4<T> PruneLayer<T>::forward(const Tensor4<T>& x, Mode) {
  return x;
}

template <typename T>
Tensor4<T> PruneLayer<T>::backward(const Tensor4<T>& d_o) {
  Tensor4<T> out = d_o;
  if (capture_) before_.assign(d_o.data().begin(), d_o.data().end());
  last_stats_ = dbtd_prune_inplace<T>(out.data(), cfg_.p, CounterRng::derive(cfg_.seed, layer_id_, calls_));
  ++calls_;
  if (capture_) after_.assign(out.data().begin(), out.data().end());
  return out;
}

// ---- ReLU ------------------------------------------------------------------

template <typename T>
Tensor4<T> ReLU<T>::forward(const Tensor4<T>& x, Mode) {
  Tensor4<T> out = x;
  mask_.resize(x.size());
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    mask_[i] = d[i] > T(0);
    if (!mask_[i]) d[i] = T(0);
  }
  shape_ = x.shape();
  return out;
}

template <typename T>
Tensor4<T> ReLU<T>::backward(const Tensor4<T>& dy) {
  if (!shape_) throw StateError(this->name() + ": backward called before forward");
  if (dy.shape() != *shape_) throw DimensionError(this->name() + ": gradient shape mismatch");
  Tensor4<T> dx = dy;
  auto d = dx.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!mask_[i]) d[i] = T(0);
  return dx;
}

// ---- BatchNorm2d -----------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::size_t channels, double eps, double momentum)
    : Layer<T>(std::move(name)),
      channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(channels, T(1)),
      beta_(channels, T(0)),
      gamma_grad_(channels, T(0)),
      beta_grad_(channels, T(0)),
      running_mean_(channels, T(0)),
      running_var_(channels, T(1)),
      inv_std_(channels, T(0)) {
  if (!(momentum > 0.0 && momentum < 1.0)) throw std::invalid_argument("batchnorm: momentum must be in (0, 1)");
}

template <typename T>
Tensor4<T> BatchNorm2d<T>::forward(const Tensor4<T>& x, Mode mode) {
  if (x.c() != channels_) throw DimensionError(this->name() + ": channel mismatch, got " + x.shape().str());
  const std::size_t plane = x.h() * x.w();
  Tensor4<T> out(x.shape());
  if (mode == Mode::eval) {
    for (std::size_t c = 0; c < channels_; ++c) {
      const double scale = static_cast<double>(gamma_[c]) / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
      const double shift = static_cast<double>(beta_[c]) - scale * static_cast<double>(running_mean_[c]);
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* src = x.image(n).data() + c * plane;
        T* dst = out.image(n).data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(scale * src[i] + shift);
      }
    }
    xhat_.reset();
    return out;
  }
  if (x.n() < 2) throw std::invalid_argument(this->name() + ": training-mode batch norm needs a batch of at least 2");
  Tensor4<T> xhat(x.shape());
  const double count = static_cast<double>(x.n() * plane);
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const T* src = x.image(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const T* src = x.image(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = src[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = static_cast<T>(inv_std);
    for (std::size_t n = 0; n < x.n(); ++n) {
      const T* src = x.image(n).data() + c * plane;
      T* xh = xhat.image(n).data() + c * plane;
      T* dst = out.image(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = static_cast<T>((src[i] - mean) * inv_std);
        dst[i] = gamma_[c] * xh[i] + beta_[c];
      }
    }
    const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
    running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
    running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
  }
  xhat_ = std::move(xhat);
  return out;
}

template <typename T>
Tensor4<T> BatchNorm2d<T>::backward(const Tensor4<T>& dy) {
  if (!xhat_) throw StateError(this->name() + ": backward called without a training forward");
  if (dy.shape() != xhat_->shape()) throw DimensionError(this->name() + ": gradient shape mismatch");
  const std::size_t plane = dy.h() * dy.w();
  const double count = static_cast<double>(dy.n() * plane);
  Tensor4<T> dx(dy.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double dgamma = 0.0;
    double dbeta = 0.0;
    for (std::size_t n = 0; n < dy.n(); ++n) {
      const T* g = dy.image(n).data() + c * plane;
      const T* xh = xhat_->image(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dgamma += static_cast<double>(g[i]) * xh[i];
        dbeta += g[i];
      }
    }
    gamma_grad_[c] = static_cast<T>(dgamma);
    beta_grad_[c] = static_cast<T>(dbeta);
    const double k = static_cast<double>(gamma_[c]) * inv_std_[c] / count;
    for (std::size_t n = 0; n < dy.n(); ++n) {
      const T* g = dy.image(n).data() + c * plane;
      const T* xh = xhat_->image(n).data() + c * plane;
      T* d = dx.image(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) d[i] = static_cast<T>(k * (count * g[i] - dbeta - xh[i] * dgamma));
    }
  }
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect_params(std::vector<ParamRef<T>>& out) {
  out.push_back({this->name() + ".gamma", gamma_, gamma_grad_, false});
  out.push_back({this->name() + ".beta", beta_, beta_grad_, false});
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(std::vector<ParamRef<T>>& out) {
  out.push_back({this->name() + ".running_mean", running_mean_, {}, false});
  out.push_back({this->name() + ".running_var", running_var_, {}, false});
}

// ---- Linear ----------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : Layer<T>(std::move(name)),
      in_features_(in_features),
      out_features_(out_features),
      weights_(out_features, in_features),
      bias_(out_features, T(0)),
      weight_grad_(out_features, in_features),
      bias_grad_(out_features, T(0)) {
  if (in_features == 0 || out_features == 0) throw DimensionError("linear: feature counts must be >= 1");
}

template <typename T>
Tensor4<T> Linear<T>::forward(const Tensor4<T>& x, Mode mode) {
  if (x.shape().image_size() != in_features_) {
    throw DimensionError(this->name() + ": expected " + std::to_string(in_features_) + " features, got " +
                         x.shape().str());
  }
  Tensor4<T> out(x.n(), out_features_, 1, 1);
  for (std::size_t n = 0; n < x.n(); ++n) {
    const T* in = x.image(n).data();
    T* o = out.image(n).data();
    for (std::size_t j = 0; j < out_features_; ++j) {
      const T* wrow = weights_.row(j).data();
      T sum = bias_[j];
      for (std::size_t i = 0; i < in_features_; ++i) sum += wrow[i] * in[i];
      o[j] = sum;
    }
  }
  if (mode == Mode::train) {
    cached_input_ = x;
  } else {
    cached_input_.reset();
  }
  return out;
}

template <typename T>
Tensor4<T> Linear<T>::backward(const Tensor4<T>& dy) {
  if (!cached_input_) throw StateError(this->name() + ": backward called without a training forward");
  const Tensor4<T>& x = *cached_input_;
  if (dy.n() != x.n() || dy.shape().image_size() != out_features_) {
    throw DimensionError(this->name() + ": gradient shape mismatch");
  }
  std::fill(weight_grad_.data().begin(), weight_grad_.data().end(), T(0));
  std::fill(bias_grad_.begin(), bias_grad_.end(), T(0));
  Tensor4<T> dx(x.shape());
  for (std::size_t n = 0; n < x.n(); ++n) {
    const T* in = x.image(n).data();
    const T* g = dy.image(n).data();
    T* d = dx.image(n).data();
    for (std::size_t j = 0; j < out_features_; ++j) {
      const T gj = g[j];
      bias_grad_[j] += gj;
      if (gj == T(0)) continue;
      T* wg = weight_grad_.row(j).data();
      const T* w = weights_.row(j).data();
      for (std::size_t i = 0; i < in_features_; ++i) {
        wg[i] += gj * in[i];
        d[i] += gj * w[i];
      }
    }
  }
  return dx;
}

template <typename T>
void Linear<T>::collect_params(std::vector<ParamRef<T>>& out) {
  out.push_back({this->name() + ".weight", weights_.data(), weight_grad_.data(), true});
  out.push_back({this->name() + ".bias", bias_, bias_grad_, false});
}

// ---- Pooling ---------------------------------------------------------------

namespace {
std::size_t pooled_extent(std::size_t in, std::size_t kernel, std::size_t stride, const std::string& who) {
  if (kernel == 0 || stride == 0) throw ShapeError(who + ": kernel and stride must be >= 1");
  if (in < kernel) throw ShapeError(who + ": input extent " + std::to_string(in) + " smaller than kernel");
  return (in - kernel) / stride + 1;
}
}  // namespace

template <typename T>
MaxPool2d<T>::MaxPool2d(std::string name, std::size_t kernel, std::size_t stride)
    : Layer<T>(std::move(name)), kernel_(kernel), stride_(stride) {}

template <typename T>
Tensor4<T> MaxPool2d<T>::forward(const Tensor4<T>& x, Mode) {
  const std::size_t ho = pooled_extent(x.h(), kernel_, stride_, this->name());
  const std::size_t wo = pooled_extent(x.w(), kernel_, stride_, this->name());
  Tensor4<T> out(x.n(), x.c(), ho, wo);
  argmax_.resize(out.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      for (std::size_t oh = 0; oh < ho; ++oh) {
        for (std::size_t ow = 0; ow < wo; ++ow, ++o) {
          std::size_t best = x.offset(n, c, oh * stride_, ow * stride_);
          for (std::size_t kh = 0; kh < kernel_; ++kh) {
            for (std::size_t kw = 0; kw < kernel_; ++kw) {
              const std::size_t idx = x.offset(n, c, oh * stride_ + kh, ow * stride_ + kw);
              if (x.data()[idx] > x.data()[best]) best = idx;
            }
          }
          argmax_[o] = best;
          out.data()[o] = x.data()[best];
        }
      }
    }
  }
  in_shape_ = x.shape();
  return out;
}

template <typename T>
Tensor4<T> MaxPool2d<T>::backward(const Tensor4<T>& dy) {
  if (!in_shape_) throw StateError(this->name() + ": backward called before forward");
  if (dy.size() != argmax_.size()) throw DimensionError(this->name() + ": gradient shape mismatch");
  Tensor4<T> dx(*in_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) dx.data()[argmax_[o]] += dy.data()[o];
  return dx;
}

template <typename T>
AvgPool2d<T>::AvgPool2d(std::string name, std::size_t kernel, std::size_t stride)
    : Layer<T>(std::move(name)), kernel_(kernel), stride_(stride) {}

template <typename T>
Tensor4<T> AvgPool2d<T>::forward(const Tensor4<T>& x, Mode) {
  kh_ = kernel_ == 0 ? x.h() : kernel_;
  kw_ = kernel_ == 0 ? x.w() : kernel_;
  sh_ = kernel_ == 0 ? x.h() : stride_;
  sw_ = kernel_ == 0 ? x.w() : stride_;
  const std::size_t ho = pooled_extent(x.h(), kh_, sh_, this->name());
  const std::size_t wo = pooled_extent(x.w(), kw_, sw_, this->name());
  Tensor4<T> out(x.n(), x.c(), ho, wo);
  const T scale = T(1) / static_cast<T>(kh_ * kw_);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) {
          T sum = T(0);
          for (std::size_t kh = 0; kh < kh_; ++kh)
            for (std::size_t kw = 0; kw < kw_; ++kw) sum += x(n, c, oh * sh_ + kh, ow * sw_ + kw);
          out(n, c, oh, ow) = sum * scale;
        }
  in_shape_ = x.shape();
  return out;
}

template <typename T>
Tensor4<T> AvgPool2d<T>::backward(const Tensor4<T>& dy) {
  if (!in_shape_) throw StateError(this->name() + ": backward called before forward");
  Tensor4<T> dx(*in_shape_);
  const T scale = T(1) / static_cast<T>(kh_ * kw_);
  for (std::size_t n = 0; n < dy.n(); ++n)
    for (std::size_t c = 0; c < dy.c(); ++c)
      for (std::size_t oh = 0; oh < dy.h(); ++oh)
        for (std::size_t ow = 0; ow < dy.w(); ++ow) {
          const T g = dy(n, c, oh, ow) * scale;
          for (std::size_t kh = 0; kh < kh_; ++kh)
            for (std::size_t kw = 0; kw < kw_; ++kw) dx(n, c, oh * sh_ + kh, ow * sw_ + kw) += g;
        }
  return dx;
}

// ---- Containers ------------------------------------------------------------

template <typename T>
Tensor4<T> Sequential<T>::forward(const Tensor4<T>& x, Mode mode) {
  if (layers_.empty()) return x;
  Tensor4<T> cur = layers_.front()->forward(x, mode);
  for (std::size_t i = 1; i < layers_.size(); ++i) cur = layers_[i]->forward(cur, mode);
  return cur;
}

template <typename T>
Tensor4<T> Sequential<T>::backward(const Tensor4<T>& dy) {
  if (layers_.empty()) return dy;
  Tensor4<T> cur = layers_.back()->backward(dy);
  for (std::size_t i = layers_.size() - 1; i-- > 0;) cur = layers_[i]->backward(cur);
  return cur;
}

template <typename T>
void Sequential<T>::collect_params(std::vector<ParamRef<T>>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

template <typename T>
void Sequential<T>::collect_buffers(std::vector<ParamRef<T>>& out) {
  for (auto& l : layers_) l->collect_buffers(out);
}

template <typename T>
void Sequential<T>::visit(const std::function<void(Layer<T>&)>& fn) {
  fn(*this);
  for (auto& l : layers_) l->visit(fn);
}

template <typename T>
ResidualBlock<T>::ResidualBlock(std::string name)
    : Layer<T>(name), main_(name + ".main"), shortcut_(name + ".shortcut"), relu_(name + ".relu") {}

template <typename T>
Tensor4<T> ResidualBlock<T>::forward(const Tensor4<T>& x, Mode mode) {
  Tensor4<T> sum = main_.forward(x, mode);
  const Tensor4<T> skip = shortcut_.forward(x, mode);
  if (sum.shape() != skip.shape()) {
    throw DimensionError(this->name() + ": main path " + sum.shape().str() + " vs shortcut " + skip.shape().str());
  }
  auto s = sum.data();
  const auto k = skip.data();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += k[i];
  return relu_.forward(sum, mode);
}

template <typename T>
Tensor4<T> ResidualBlock<T>::backward(const Tensor4<T>& dy) {
  const Tensor4<T> d = relu_.backward(dy);
  Tensor4<T> dx = main_.backward(d);
  const Tensor4<T> ds = shortcut_.backward(d);
  auto a = dx.data();
  const auto b = ds.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return dx;
}

template <typename T>
void ResidualBlock<T>::collect_params(std::vector<ParamRef<T>>& out) {
  main_.collect_params(out);
  shortcut_.collect_params(out);
}

template <typename T>
void ResidualBlock<T>::collect_buffers(std::vector<ParamRef<T>>& out) {
  main_.collect_buffers(out);
  shortcut_.collect_buffers(out);
}

template <typename T>
void ResidualBlock<T>::visit(const std::function<void(Layer<T>&)>& fn) {
  fn(*this);
  main_.visit(fn);
  shortcut_.visit(fn);
  fn(relu_);
}

// ---- Loss ------------------------------------------------------------------

template <typename T>
XentResult<T> softmax_xent(const Tensor4<T>& logits, std::span<const int> labels) {
  const std::size_t n = logits.n();
  const std::size_t k = logits.shape().image_size();
  if (labels.size() != n) throw DimensionError("softmax_xent: label count does not match batch");
  XentResult<T> result{0.0, Tensor4<T>(logits.shape()), 0};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::invalid_argument("softmax_xent: label " + std::to_string(label) + " out of range [0, " +
                                  std::to_string(k) + ")");
    }
    const T* z = logits.image(i).data();
    T* g = result.dlogits.image(i).data();
    double zmax = z[0];
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (z[j] > zmax) {
        zmax = z[j];
        best = j;
      }
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z[j]) - zmax);
    const double log_denom = std::log(denom);
    total += -(static_cast<double>(z[label]) - zmax - log_denom);
    for (std::size_t j = 0; j < k; ++j) {
      const double prob = std::exp(static_cast<double>(z[j]) - zmax - log_denom);
      g[j] = static_cast<T>((prob - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0)) / static_cast<double>(n));
    }
    result.correct += best == static_cast<std::size_t>(label);
  }
  result.loss = total / static_cast<double>(n);
  return result;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor4<T>& logits) {
  std::vector<int> out(logits.n());
  const std::size_t k = logits.shape().image_size();
  for (std::size_t i = 0; i < logits.n(); ++i) {
    const T* z = logits.image(i).data();
    out[i] = static_cast<int>(std::max_element(z, z + k) - z);
  }
  return out;
}

#define AGP_INSTANTIATE(T)                                                                                   \
  template Tensor4<T> conv_backward_data_sparse(const Matrix<T>&, const ConvSpec&, const Tensor4<T>&,        \
                                                const Shape4&);                                              \
  template Tensor4<T> conv_backward_data_dense(const Matrix<T>&, const ConvSpec&, const Tensor4<T>&,         \
                                               const Shape4&);                                               \
  template Matrix<T> conv_backward_weights_sparse(const ConvSpec&, const Tensor4<T>&, const Tensor4<T>&);    \
  template Matrix<T> conv_backward_weights_dense(const ConvSpec&, const Tensor4<T>&, const Tensor4<T>&);     \
  template class Conv2d<T>;                                                                                  \
  template class PruneLayer<T>;                                                                              \
  template class ReLU<T>;                                                                                    \
  template class BatchNorm2d<T>;                                                                             \
  template class Linear<T>;                                                                                  \
  template class MaxPool2d<T>;                                                                               \
  template class AvgPool2d<T>;                                                                               \
  template class Sequential<T>;                                                                              \
  template class ResidualBlock<T>;                                                                           \
  template XentResult<T> softmax_xent(const Tensor4<T>&, std::span<const int>);                              \
  template std::vector<int> argmax_rows(const Tensor4<T>&);

AGP_INSTANTIATE(float)
AGP_INSTANTIATE(double)
#undef AGP_INSTANTIATE

}  // namespace agp
