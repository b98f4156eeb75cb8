#include <random>

#include "agp/errors.hpp"
#include "agp/sparse.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace agp;

namespace {

Matrix<float> random_sparse(std::size_t r, std::size_t c, double dens, std::mt19937_64& gen) {
  Matrix<float> m(r, c);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : m.data()) v = u(gen) < dens ? n(gen) : 0.0f;
  return m;
}

}  // namespace

TEST_SUITE("sparse") {

TEST_CASE("dense_to_csr") {
  const auto z = dense_to_csr(Matrix<float>(4, 4));
  CHECK(z.nnz() == 0);
  CHECK(z.row_ptr == std::vector<std::size_t>{0, 0, 0, 0, 0});

  const auto id = dense_to_csr(Matrix<float>::identity(3));
  CHECK(id.nnz() == 3);
  CHECK(id.col_idx == std::vector<std::uint32_t>{0, 1, 2});
  CHECK(id.values == std::vector<float>{1, 1, 1});

  const auto m = dense_to_csr(Matrix<float>(2, 2, {0, 2, 3, 0}));
  CHECK(m.row_ptr == std::vector<std::size_t>{0, 1, 2});
  CHECK(m.col_idx == std::vector<std::uint32_t>{1, 0});
  CHECK(m.values == std::vector<float>{2, 3});
}

TEST_CASE("csr structural invariants hold for random inputs") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_sparse(1 + trial % 13, 1 + trial % 17, trial / 50.0, gen);
    const auto a = dense_to_csr(m);
    CHECK_NOTHROW(a.validate());
    CHECK(a.row_ptr.back() == a.nnz());
    for (const float v : a.values) CHECK(v != 0.0f);
    CHECK(to_dense(a) == m);
  }
  CsrMatrix<float> bad = dense_to_csr(Matrix<float>::identity(2));
  bad.col_idx[1] = 5;
  CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("csr_transpose_from_dense") {
  const auto id = csr_transpose_from_dense(Matrix<float>::identity(2));
  CHECK(to_dense(id) == Matrix<float>::identity(2));

  const auto t = csr_transpose_from_dense(Matrix<float>(2, 2, {0, 2, 3, 0}));
  CHECK(to_dense(t) == Matrix<float>(2, 2, {0, 3, 2, 0}));

  const auto col = csr_transpose_from_dense(Matrix<float>(1, 4, {1, 0, 2, 3}));
  CHECK(col.rows == 4);
  CHECK(col.cols == 1);
  CHECK(col.row_ptr == std::vector<std::size_t>{0, 1, 1, 2, 3});

  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_sparse(3 + trial, 20 - trial / 2, 0.3, gen);
    const auto a = csr_transpose_from_dense(m);
    CHECK_NOTHROW(a.validate());
    CHECK(to_dense(a) == transpose(m));
  }
}

TEST_CASE("sdmm") {
  std::mt19937_64 gen(4);
  Matrix<float> b(4, 5);
  oracle::fill_normal(b.data(), gen);
  CHECK(sdmm(dense_to_csr(Matrix<float>::identity(4)), b) == b);

  Matrix<float> b3(3, 6);
  oracle::fill_normal(b3.data(), gen);
  CHECK(sdmm(dense_to_csr(Matrix<float>(3, 3)), b3) == Matrix<float>(3, 6));

  const auto a = random_sparse(8, 8, 0.1, gen);
  Matrix<float> b8(8, 4);
  oracle::fill_normal(b8.data(), gen);
  const auto got = sdmm(dense_to_csr(a), b8);
  CHECK(max_relative_error<float>(got.data(), oracle::matmul(a, b8).data()) < 1e-5);

  CHECK_THROWS_AS(sdmm(dense_to_csr(a), Matrix<float>(7, 4)), DimensionError);
}

TEST_CASE("density") {
  CHECK(density(dense_to_csr(Matrix<float>(3, 3))) == 0.0);
  CHECK(density(dense_to_csr(Matrix<float>(2, 3, 1.5f))) == 1.0);
  CHECK(density(dense_to_csr(Matrix<float>(2, 2, {1, 0, 0, 2}))) == 0.5);
}

}
