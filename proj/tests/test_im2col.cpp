#include <random>

#include "agp/errors.hpp"
#include "agp/im2col.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace agp;

namespace {

ConvSpec random_spec(std::mt19937_64& gen, std::size_t& h, std::size_t& w) {
  std::uniform_int_distribution<std::size_t> ch(1, 4), k(1, 3), st(1, 2), pd(0, 2), out(1, 5);
  ConvSpec s{ch(gen), ch(gen), k(gen), k(gen), st(gen), pd(gen)};
  // Pick extents that satisfy the divisibility rule.
  const std::size_t ho = out(gen), wo = out(gen);
  h = std::max<long>(1, static_cast<long>((ho - 1) * s.stride + s.kernel_h) - 2 * static_cast<long>(s.padding));
  w = std::max<long>(1, static_cast<long>((wo - 1) * s.stride + s.kernel_w) - 2 * static_cast<long>(s.padding));
  while ((h + 2 * s.padding) < s.kernel_h || (h + 2 * s.padding - s.kernel_h) % s.stride) ++h;
  while ((w + 2 * s.padding) < s.kernel_w || (w + 2 * s.padding - s.kernel_w) % s.stride) ++w;
  return s;
}

}  // namespace

TEST_SUITE("im2col") {

TEST_CASE("output extents require exact divisibility") {
  const ConvSpec s{1, 1, 3, 3, 2, 1};
  CHECK(s.out_h(5) == 3);
  CHECK_THROWS_AS(s.out_h(4), ShapeError);
  const ConvSpec big{1, 1, 5, 5, 1, 0};
  CHECK_THROWS_AS(big.out_w(3), ShapeError);
  Tensor4<float> img(1, 1, 4, 4);
  CHECK_THROWS_AS(im2col(img, s), ShapeError);
}

TEST_CASE("unit kernel is a reshape") {
  std::mt19937_64 gen(1);
  Tensor4<float> x(1, 3, 4, 5);
  oracle::fill_normal(x.data(), gen);
  const ConvSpec s{3, 2, 1, 1, 1, 0};
  const auto m = im2col(x, s);
  CHECK(m == view_as_matrix(x, 3, 20));
  CHECK(col2im(m, s, 4, 5).storage() == x.storage());
}

TEST_CASE("zero input gives zero output") {
  const ConvSpec s{2, 1, 2, 2, 1, 1};
  const auto m = im2col(Tensor4<float>(1, 2, 3, 3), s);
  for (const float v : m.data()) CHECK(v == 0.0f);
  const auto img = col2im(Matrix<float>(m.rows(), m.cols()), s, 3, 3);
  for (const float v : img.data()) CHECK(v == 0.0f);
}

TEST_CASE("2x2 patches of a 3x3 image") {
  std::vector<float> d(9);
  for (int i = 0; i < 9; ++i) d[i] = static_cast<float>(i + 1);
  const Tensor4<float> x(Shape4{1, 1, 3, 3}, d);
  const ConvSpec s{1, 1, 2, 2, 1, 0};
  const auto m = im2col(x, s);
  REQUIRE(m.rows() == 4);
  REQUIRE(m.cols() == 4);
  // Hand loop oracle: column (oh, ow) holds the patch with top-left (oh, ow).
  for (std::size_t oh = 0; oh < 2; ++oh)
    for (std::size_t ow = 0; ow < 2; ++ow)
      for (std::size_t kh = 0; kh < 2; ++kh)
        for (std::size_t kw = 0; kw < 2; ++kw) CHECK(m(kh * 2 + kw, oh * 2 + ow) == x(0, 0, oh + kh, ow + kw));
  CHECK(m(0, 0) == 1.0f);
  CHECK(m(3, 3) == 9.0f);
}

TEST_CASE("col2im counts overlapping patches") {
  const ConvSpec s{1, 1, 2, 2, 1, 0};
  const auto img = col2im(Matrix<float>(4, 4, 1.0f), s, 3, 3);
  CHECK(img(0, 0, 1, 1) == 4.0f);
  CHECK(img(0, 0, 0, 0) == 1.0f);
  CHECK(img(0, 0, 0, 1) == 2.0f);
}

TEST_CASE("col2im is the adjoint of im2col") {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t h = 0, w = 0;
    const ConvSpec s = random_spec(gen, h, w);
    Tensor4<double> x(1, s.in_channels, h, w);
    oracle::fill_normal(x.data(), gen);
    const auto m = im2col(x, s);
    Matrix<double> y(m.rows(), m.cols());
    oracle::fill_normal(y.data(), gen);
    const auto back = col2im(y, s, h, w);
    CHECK(oracle::dot(m.data(), y.data()) == doctest::Approx(oracle::dot(x.data(), back.data())).epsilon(1e-10));
  }
}

TEST_CASE("im2col_trans") {
  const ConvSpec s{2, 3, 1, 1, 1, 0};
  const auto z = im2col_trans(Tensor4<float>(1, 3, 2, 4), s);
  CHECK(z.nnz() == 0);
  CHECK(z.rows == 8);
  CHECK(z.cols == 3);

  Tensor4<float> one(1, 3, 2, 4);
  one(0, 2, 1, 1) = 7.0f;  // channel 2, position 5
  const auto a = im2col_trans(one, s);
  REQUIRE(a.nnz() == 1);
  CHECK(a.row_ptr[5] == 0);
  CHECK(a.row_ptr[6] == 1);
  CHECK(a.col_idx[0] == 2);
  CHECK(a.values[0] == 7.0f);

  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const ConvSpec sp{1, 1 + static_cast<std::size_t>(trial % 5), 1, 1, 1, 0};
    Tensor4<float> g(1, sp.out_channels, 3, 1 + static_cast<std::size_t>(trial % 4));
    for (auto& v : g.data()) v = u(gen) < 0.3 ? static_cast<float>(u(gen) - 0.5) : 0.0f;
    const auto got = im2col_trans(g, sp);
    CHECK_NOTHROW(got.validate());
    const auto want = csr_transpose_from_dense(view_as_matrix(g, sp.out_channels, g.h() * g.w()));
    CHECK(got.row_ptr == want.row_ptr);
    CHECK(got.col_idx == want.col_idx);
    CHECK(got.values == want.values);
  }
}

TEST_CASE("col2im_trans equals col2im of the transpose") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t h = 0, w = 0;
    const ConvSpec s = random_spec(gen, h, w);
    Matrix<float> m(s.out_h(h) * s.out_w(w), s.patch_size());
    oracle::fill_normal(m.data(), gen);
    const auto got = col2im_trans(m, s, h, w);
    const auto want = col2im(transpose(m), s, h, w);
    CHECK(got.storage() == want.storage());
  }
  const ConvSpec s{2, 1, 3, 3, 1, 1};
  const auto zero = col2im_trans(Matrix<float>(16, 18), s, 4, 4);
  for (const float v : zero.data()) CHECK(v == 0.0f);

  const ConvSpec unit{3, 1, 1, 1, 1, 0};
  Matrix<float> m(6, 3);
  oracle::fill_normal(m.data(), gen);
  const auto img = col2im_trans(m, unit, 2, 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 6; ++p) CHECK(img(0, c, p / 3, p % 3) == m(p, c));
  CHECK_THROWS_AS(col2im_trans(Matrix<float>(5, 3), unit, 2, 3), DimensionError);
}

}
