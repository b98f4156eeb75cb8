#include "agp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

#include "agp/errors.hpp"

namespace agp {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const std::string& file) {
  if (offset + 4 > buf.size()) throw FormatError(file + ": truncated header", buf.size());
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

// Scales bytes already stored in `images` (0..255) to [0, 1] and standardizes
// per channel, with `norm` or with statistics of this data.
Normalization standardize(Tensor4<float>& images, const Normalization* norm) {
  const std::size_t channels = images.c();
  const std::size_t plane = images.h() * images.w();
  Normalization used;
  if (norm) {
    if (norm->mean.size() != channels || norm->stddev.size() != channels) {
      throw DimensionError("normalization channel count does not match dataset");
    }
    used = *norm;
  } else {
    used.mean.assign(channels, 0.0);
    used.stddev.assign(channels, 1.0);
    const double count = static_cast<double>(images.n() * plane);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum = 0.0;
      double sq = 0.0;
      for (std::size_t n = 0; n < images.n(); ++n) {
        const float* p = images.image(n).data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double v = p[i] / 255.0;
          sum += v;
          sq += v * v;
        }
      }
      const double mean = sum / count;
      const double var = std::max(sq / count - mean * mean, 0.0);
      used.mean[c] = mean;
      used.stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  }
  for (std::size_t n = 0; n < images.n(); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      float* p = images.image(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        p[i] = static_cast<float>((p[i] / 255.0 - used.mean[c]) / used.stddev[c]);
      }
    }
  }
  return used;
}

}  // namespace

void Dataset::validate() const {
  if (images.n() != labels.size()) throw DimensionError("dataset: image and label counts differ");
  for (const int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw std::invalid_argument("dataset: label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 const Normalization* norm) {
  const std::string img_name = images_path.string();
  const std::string lbl_name = labels_path.string();
  const auto img = read_file(images_path);
  const auto lbl = read_file(labels_path);

  const std::uint32_t img_magic = read_be32(img, 0, img_name);
  if (img_magic != 0x00000803) throw FormatError(img_name + ": bad IDX image magic", 0);
  const std::uint32_t count = read_be32(img, 4, img_name);
  const std::uint32_t rows = read_be32(img, 8, img_name);
  const std::uint32_t cols = read_be32(img, 12, img_name);
  if (count == 0 || rows == 0 || cols == 0) throw FormatError(img_name + ": zero extent in IDX header", 4);
  const std::size_t pixels = std::size_t{count} * rows * cols;
  if (img.size() < 16 + pixels) throw FormatError(img_name + ": truncated pixel data", img.size());

  const std::uint32_t lbl_magic = read_be32(lbl, 0, lbl_name);
  if (lbl_magic != 0x00000801) throw FormatError(lbl_name + ": bad IDX label magic", 0);
  const std::uint32_t lbl_count = read_be32(lbl, 4, lbl_name);
  if (lbl_count != count) throw FormatError(lbl_name + ": label count does not match image count", 4);
  if (lbl.size() < 8 + std::size_t{count}) throw FormatError(lbl_name + ": truncated label data", lbl.size());

  Dataset ds{Tensor4<float>(count, 1, rows, cols), std::vector<int>(count), 10, {}};
  std::copy(img.begin() + 16, img.begin() + 16 + static_cast<std::ptrdiff_t>(pixels), ds.images.data().begin());
  for (std::size_t i = 0; i < count; ++i) {
    const int label = lbl[8 + i];
    if (label >= 10) throw FormatError(lbl_name + ": label " + std::to_string(label) + " out of range", 8 + i);
    ds.labels[i] = label;
  }
  ds.normalization = standardize(ds.images, norm);
  return ds;
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths, const Normalization* norm) {
  constexpr std::size_t kRecord = 3073;
  constexpr std::size_t kPixels = 3 * 32 * 32;
  if (batch_paths.empty()) throw std::invalid_argument("load_cifar10: no batch files given");
  std::vector<std::vector<std::uint8_t>> files;
  std::size_t total = 0;
  for (const auto& path : batch_paths) {
    files.push_back(read_file(path));
    const auto& buf = files.back();
    if (buf.empty() || buf.size() % kRecord != 0) {
      throw FormatError(path.string() + ": length " + std::to_string(buf.size()) + " is not a multiple of 3073",
                        buf.size() - buf.size() % kRecord);
    }
    total += buf.size() / kRecord;
  }
  Dataset ds{Tensor4<float>(total, 3, 32, 32), std::vector<int>(total), 10, {}};
  std::size_t idx = 0;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto& buf = files[f];
    for (std::size_t off = 0; off < buf.size(); off += kRecord, ++idx) {
      const int label = buf[off];
      if (label >= 10) {
        throw FormatError(batch_paths[f].string() + ": label " + std::to_string(label) + " out of range", off);
      }
      ds.labels[idx] = label;
      auto dst = ds.images.image(idx);
      std::copy(buf.begin() + static_cast<std::ptrdiff_t>(off + 1),
                buf.begin() + static_cast<std::ptrdiff_t>(off + 1 + kPixels), dst.begin());
    }
  }
  ds.normalization = standardize(ds.images, norm);
  return ds;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const CounterRng rng = CounterRng::derive(seed, 0xda7a5e7ULL, epoch);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bits(i) % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

Dataset subset_per_class(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  const auto order = permutation(ds.size(), seed, 0);
  std::vector<std::size_t> taken(ds.num_classes, 0);
  std::vector<std::size_t> chosen;
  for (const std::size_t i : order) {
    const auto label = static_cast<std::size_t>(ds.labels[i]);
    if (taken[label] < k) {
      ++taken[label];
      chosen.push_back(i);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  Batch picked = gather(ds, chosen);
  return Dataset{std::move(picked.images), std::move(picked.labels), ds.num_classes, ds.normalization};
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("gather: empty index list");
  Shape4 shape = ds.images.shape();
  shape.n = indices.size();
  Batch b{Tensor4<float>(shape), std::vector<int>(indices.size()),
          std::vector<std::size_t>(indices.begin(), indices.end())};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = ds.images.image(indices[i]);
    std::copy(src.begin(), src.end(), b.images.image(i).begin());
    b.labels[i] = ds.labels[indices[i]];
  }
  return b;
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch)
    : ds_(&ds), batch_size_(batch_size), order_(permutation(ds.size(), seed, epoch)) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch_size must be >= 1");
}

bool BatchIterator::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  out = gather(*ds_, std::span<const std::size_t>(order_).subspan(cursor_, end - cursor_));
  cursor_ = end;
  return true;
}

std::size_t BatchIterator::batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

BatchIterator batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  return BatchIterator(ds, batch_size, seed, epoch);
}

void augment_flip_crop(Tensor4<float>& images, const CounterRng& rng) {
  constexpr std::size_t kPad = 4;
  const std::size_t h = images.h();
  const std::size_t w = images.w();
  std::vector<float> plane(h * w);
  for (std::size_t n = 0; n < images.n(); ++n) {
    const std::uint64_t r = rng.bits(n);
    const bool flip = (r & 1) != 0;
    const auto dy = static_cast<std::ptrdiff_t>((r >> 8) % (2 * kPad + 1)) - static_cast<std::ptrdiff_t>(kPad);
    const auto dx = static_cast<std::ptrdiff_t>((r >> 16) % (2 * kPad + 1)) - static_cast<std::ptrdiff_t>(kPad);
    for (std::size_t c = 0; c < images.c(); ++c) {
      float* p = images.image(n).data() + c * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          const std::ptrdiff_t sx0 = static_cast<std::ptrdiff_t>(flip ? w - 1 - x : x) + dx;
          const bool inside = sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx0 >= 0 &&
                              sx0 < static_cast<std::ptrdiff_t>(w);
          plane[y * w + x] = inside ? p[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx0)] : 0.0f;
        }
      }
      std::copy(plane.begin(), plane.end(), p);
    }
  }
}

}  // namespace agp
