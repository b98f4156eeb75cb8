#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "agp/tensor.hpp"

namespace agp {

// Compressed sparse row matrix. Built from pruned gradients, so explicit zeros
// never appear: an entry is stored iff its value is non-zero.
template <typename T>
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col_idx;
  std::vector<T> values;

  std::size_t nnz() const { return values.size(); }
  // Throws DimensionError when any structural invariant is broken.
  void validate() const;
};

// Exact-zero test, no epsilon: the pruning stage already emits exact zeros.
template <typename T>
CsrMatrix<T> dense_to_csr(const Matrix<T>& m);

template <typename T>
void dense_to_csr_into(const Matrix<T>& m, CsrMatrix<T>& out);

// Same, for a row-major rows x cols block that is not wrapped in a Matrix.
template <typename T>
void dense_to_csr_into(std::span<const T> data, std::size_t rows, std::size_t cols, CsrMatrix<T>& out);

// CSR of m^T in one counting-sort pass over m.
template <typename T>
CsrMatrix<T> csr_transpose_from_dense(const Matrix<T>& m);

template <typename T>
Matrix<T> to_dense(const CsrMatrix<T>& a);

// Sparse x dense product. Each output row is the sum of the dense rows of b
// selected by the row's column indices, scaled by the stored values, taken in
// column order.
template <typename T>
Matrix<T> sdmm(const CsrMatrix<T>& a, const Matrix<T>& b);

template <typename T>
void sdmm_into(const CsrMatrix<T>& a, const Matrix<T>& b, Matrix<T>& out);

template <typename T>
double density(const CsrMatrix<T>& a);

}  // namespace agp
