#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "agp/im2col.hpp"

namespace agp {

// One convolution layer geometry for the backward benchmark.
struct BenchShape {
  std::string name;
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  ConvSpec conv() const;
};

// Whitespace-separated text, one shape per line:
//   name batch in_channels out_channels height width kernel stride padding
// Blank lines and lines starting with '#' are skipped.
std::vector<BenchShape> parse_bench_shapes(std::istream& in);
std::vector<BenchShape> load_bench_shapes(const std::filesystem::path& path);

struct BenchOptions {
  std::size_t repeats = 20;
  std::size_t warmup = 3;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string shape;
  double density_target = 0.0;
  double density_actual = 0.0;
  double dense_agbp_seconds = 0.0;  // medians
  double dense_wgc_seconds = 0.0;
  double sparse_agbp_seconds = 0.0;
  double sparse_wgc_seconds = 0.0;
  double dense_seconds = 0.0;   // median of the per-repeat AGBP + WGC total
  double sparse_seconds = 0.0;
  double speedup = 0.0;         // dense_seconds / sparse_seconds
  double max_rel_error_di = 0.0;
  double max_rel_error_dw = 0.0;
};

// For every (shape, density): N(0, 1) output gradients are pruned with the
// rate whose expected density equals the target, then the dense and sparse
// AGBP + WGC kernels are timed on identical inputs.
std::vector<BenchRow> bench_backward(const std::vector<BenchShape>& shapes, const std::vector<double>& densities,
                                     const BenchOptions& options = {});

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace agp
