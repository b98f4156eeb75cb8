#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "agp/im2col.hpp"
#include "agp/layers.hpp"
#include "agp/tensor.hpp"

namespace oracle {

template <typename T>
agp::Matrix<T> matmul(const agp::Matrix<T>& a, const agp::Matrix<T>& b) {
  agp::Matrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<double>(a(i, k)) * static_cast<double>(b(k, j));
      c(i, j) = static_cast<T>(s);
    }
  return c;
}

// Direct convolution. weights are (oc, ic*kh*kw) in (c, kh, kw) order.
template <typename T>
agp::Tensor4<T> conv(const agp::Tensor4<T>& x, const agp::Matrix<T>& wt, const std::vector<T>& bias,
                     const agp::ConvSpec& s) {
  const std::size_t ho = (x.h() + 2 * s.padding - s.kernel_h) / s.stride + 1;
  const std::size_t wo = (x.w() + 2 * s.padding - s.kernel_w) / s.stride + 1;
  agp::Tensor4<T> y(x.n(), s.out_channels, ho, wo);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
          for (std::size_t c = 0; c < s.in_channels; ++c)
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki)
              for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                const long r = static_cast<long>(i * s.stride + ki) - static_cast<long>(s.padding);
                const long q = static_cast<long>(j * s.stride + kj) - static_cast<long>(s.padding);
                if (r < 0 || q < 0 || r >= static_cast<long>(x.h()) || q >= static_cast<long>(x.w())) continue;
                acc += static_cast<double>(x(n, c, r, q)) *
                       static_cast<double>(wt(o, (c * s.kernel_h + ki) * s.kernel_w + kj));
              }
          y(n, o, i, j) = static_cast<T>(acc);
        }
  return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ||a - b|| / max(||a||, ||b||, tiny)
inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

// Central differences of f with respect to every entry of x.
inline std::vector<double> numeric_grad(std::span<double> x, const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Fraction of N(0,1) mass zeroed by stochastic pruning at threshold tau:
// 2 * int_0^tau phi(x) (tau - x) / tau dx, by composite Simpson.
inline double zero_fraction_quadrature(double tau, int intervals = 20000) {
  const double pi = 3.14159265358979323846;
  auto f = [&](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * pi) * (tau - x) / tau; };
  const double h = tau / intervals;
  double s = f(0.0) + f(tau);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return 2.0 * s * h / 3.0;
}

// L = sum(forward(x) * r) for a random r. Compares backward(r) and every
// parameter gradient with central differences; returns the worst relative error.
inline double gradient_check(agp::Layer<double>& layer, agp::Tensor4<double> x, std::mt19937_64& gen) {
  const agp::Tensor4<double> y0 = layer.forward(x, agp::Mode::train);
  agp::Tensor4<double> r(y0.shape());
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double& v : r.data()) v = unit(gen);
  const agp::Tensor4<double> dx = layer.backward(r);
  std::vector<agp::ParamRef<double>> params;
  layer.collect_params(params);
  std::vector<std::vector<double>> grads;
  for (const auto& p : params) grads.emplace_back(p.grad.begin(), p.grad.end());

  auto loss = [&] {
    const auto y = layer.forward(x, agp::Mode::train);
    return dot(y.data(), r.data());
  };
  double worst = rel_error(dx.data(), numeric_grad(x.data(), loss));
  for (std::size_t i = 0; i < params.size(); ++i) {
    worst = std::max(worst, rel_error(grads[i], numeric_grad(params[i].value, loss)));
  }
  return worst;
}

template <typename T>
void fill_normal(std::span<T> v, std::mt19937_64& gen, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  for (T& x : v) x = static_cast<T>(d(gen));
}

}  // namespace oracle
