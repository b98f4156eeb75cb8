#include "agp/sparse.hpp"

#include <algorithm>
#include <string>

#include "agp/parallel.hpp"

namespace agp {

template <typename T>
void CsrMatrix<T>::validate() const {
  if (row_ptr.size() != rows + 1) throw DimensionError("csr: row_ptr length != rows + 1");
  if (row_ptr.front() != 0) throw DimensionError("csr: row_ptr[0] != 0");
  if (row_ptr.back() != values.size() || col_idx.size() != values.size()) {
    throw DimensionError("csr: row_ptr[rows] does not match nnz");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_ptr[r] > row_ptr[r + 1]) throw DimensionError("csr: row_ptr decreases at row " + std::to_string(r));
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) {
      if (col_idx[p] >= cols) throw DimensionError("csr: column index out of range");
      if (p > row_ptr[r] && col_idx[p] <= col_idx[p - 1]) {
        throw DimensionError("csr: column indices not strictly increasing in row " + std::to_string(r));
      }
    }
  }
}

template <typename T>
void dense_to_csr_into(std::span<const T> data, std::size_t rows, std::size_t cols, CsrMatrix<T>& out) {
  if (data.size() != rows * cols) throw DimensionError("dense_to_csr: data length mismatch");
  out.rows = rows;
  out.cols = cols;
  out.row_ptr.assign(rows + 1, 0);
  out.col_idx.clear();
  out.values.clear();
  for (std::size_t i = 0; i < rows; ++i) {
    const T* row = data.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      if (row[j] != T(0)) {
        out.col_idx.push_back(static_cast<std::uint32_t>(j));
        out.values.push_back(row[j]);
      }
    }
    out.row_ptr[i + 1] = out.values.size();
  }
}

template <typename T>
void dense_to_csr_into(const Matrix<T>& m, CsrMatrix<T>& out) {
  dense_to_csr_into(m.data(), m.rows(), m.cols(), out);
}

template <typename T>
CsrMatrix<T> dense_to_csr(const Matrix<T>& m) {
  CsrMatrix<T> out;
  dense_to_csr_into(m, out);
  return out;
}

template <typename T>
CsrMatrix<T> csr_transpose_from_dense(const Matrix<T>& m) {
  CsrMatrix<T> out;
  out.rows = m.cols();
  out.cols = m.rows();
  out.row_ptr.assign(out.rows + 1, 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j)
      if (row[j] != T(0)) ++out.row_ptr[j + 1];
  }
  for (std::size_t r = 0; r < out.rows; ++r) out.row_ptr[r + 1] += out.row_ptr[r];
  out.col_idx.resize(out.row_ptr.back());
  out.values.resize(out.row_ptr.back());
  std::vector<std::size_t> cursor(out.row_ptr.begin(), out.row_ptr.end() - 1);
  // Scanning source rows in order keeps column indices sorted in every output row.
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] != T(0)) {
        const std::size_t p = cursor[j]++;
        out.col_idx[p] = static_cast<std::uint32_t>(i);
        out.values[p] = row[j];
      }
    }
  }
  return out;
}

template <typename T>
Matrix<T> to_dense(const CsrMatrix<T>& a) {
  Matrix<T> out(a.rows, a.cols);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) out(r, a.col_idx[p]) = a.values[p];
  return out;
}

template <typename T>
void sdmm_into(const CsrMatrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  if (a.cols != b.rows()) {
    throw DimensionError("sdmm: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = b.cols();
  out.resize(a.rows, n);
  const T* bp = b.data().data();
  T* cp = out.data().data();
  parallel_for(a.rows, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      T* crow = cp + r * n;
      std::fill(crow, crow + n, T(0));
      for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
        const T v = a.values[p];
        const T* brow = bp + static_cast<std::size_t>(a.col_idx[p]) * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
      }
    }
  });
}

template <typename T>
Matrix<T> sdmm(const CsrMatrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out;
  sdmm_into(a, b, out);
  return out;
}

template <typename T>
double density(const CsrMatrix<T>& a) {
  const std::size_t total = a.rows * a.cols;
  return total == 0 ? 0.0 : static_cast<double>(a.nnz()) / static_cast<double>(total);
}

#define AGP_INSTANTIATE(T)                                                         \
  template struct CsrMatrix<T>;                                                    \
  template CsrMatrix<T> dense_to_csr(const Matrix<T>&);                            \
  template void dense_to_csr_into(const Matrix<T>&, CsrMatrix<T>&);                \
  template void dense_to_csr_into(std::span<const T>, std::size_t, std::size_t, CsrMatrix<T>&); \
  template CsrMatrix<T> csr_transpose_from_dense(const Matrix<T>&);                \
  template Matrix<T> to_dense(const CsrMatrix<T>&);                                \
  template Matrix<T> sdmm(const CsrMatrix<T>&, const Matrix<T>&);                  \
  template void sdmm_into(const CsrMatrix<T>&, const Matrix<T>&, Matrix<T>&);      \
  template double density(const CsrMatrix<T>&);

AGP_INSTANTIATE(float)
AGP_INSTANTIATE(double)
#undef AGP_INSTANTIATE

}  // namespace agp
