#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "agp/rng.hpp"
#include "agp/tensor.hpp"

namespace agp {

// Per-channel affine standardization applied after scaling bytes to [0, 1].
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Dataset {
  Tensor4<float> images;  // (N, C, H, W)
  std::vector<int> labels;
  std::size_t num_classes = 10;
  Normalization normalization;

  std::size_t size() const { return labels.size(); }
  // Label range and image/label count agreement.
  void validate() const;
};

// MNIST IDX pair (big-endian, magic 0x00000803 / 0x00000801). When `norm` is
// given it is applied instead of statistics computed from this split.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 const Normalization* norm = nullptr);

// CIFAR-10 binary batches: 3073-byte records, one label byte then 3x32x32
// channel-planar pixels.
Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths, const Normalization* norm = nullptr);

// k examples per class: the first k of each class in a seeded permutation,
// returned in file order.
Dataset subset_per_class(const Dataset& ds, std::size_t k, std::uint64_t seed);

// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

struct Batch {
  Tensor4<float> images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);

// One epoch of shuffled mini-batches. The last partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch = 0);

  // Fills `out` with the next batch; false once the epoch is exhausted.
  bool next(Batch& out);
  std::size_t batch_count() const;

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

BatchIterator batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch = 0);

// Random horizontal flip plus random crop from a 4-pixel zero-padded image.
void augment_flip_crop(Tensor4<float>& images, const CounterRng& rng);

}  // namespace agp
