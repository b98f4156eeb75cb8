#include <filesystem>
#include <fstream>
#include <set>

#include "agp/config.hpp"
#include "agp/data.hpp"
#include "agp/errors.hpp"
#include "doctest.h"

using namespace agp;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "agp_data_tests";
  fs::create_directories(dir);
  return dir / name;
}

// Two 2x3 images, labels 7 and 2.
void write_idx_pair(const fs::path& img, const fs::path& lbl) {
  std::vector<std::uint8_t> i;
  put_be32(i, 0x803);
  put_be32(i, 2);
  put_be32(i, 2);
  put_be32(i, 3);
  for (int k = 0; k < 12; ++k) i.push_back(static_cast<std::uint8_t>(k * 20));
  write_bytes(img, i);
  std::vector<std::uint8_t> l;
  put_be32(l, 0x801);
  put_be32(l, 2);
  l.push_back(7);
  l.push_back(2);
  write_bytes(lbl, l);
}

Dataset toy(std::size_t n, std::size_t classes = 10) {
  Dataset ds{Tensor4<float>(n, 1, 2, 2), std::vector<int>(n), classes, {}};
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<int>(i % classes);
    for (auto& v : ds.images.image(i)) v = static_cast<float>(i);
  }
  return ds;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("idx fixture round-trips") {
  const auto img = scratch("img.idx"), lbl = scratch("lbl.idx");
  write_idx_pair(img, lbl);
  const Normalization identity{{0.0}, {1.0}};
  const Dataset ds = load_idx(img, lbl, &identity);
  REQUIRE(ds.size() == 2);
  CHECK(ds.images.shape() == Shape4{2, 1, 2, 3});
  CHECK(ds.labels == std::vector<int>{7, 2});
  for (int k = 0; k < 12; ++k) CHECK(ds.images.data()[k] == static_cast<float>(k * 20 / 255.0));

  const Dataset standardized = load_idx(img, lbl);
  double sum = 0.0;
  for (const float v : standardized.images.data()) sum += v;
  CHECK(sum == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("idx errors carry byte offsets") {
  const auto img = scratch("img2.idx"), lbl = scratch("lbl2.idx");
  write_idx_pair(img, lbl);
  fs::resize_file(img, 20);
  try {
    load_idx(img, lbl);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 20);
  }
  write_idx_pair(img, lbl);
  std::vector<std::uint8_t> bad;
  put_be32(bad, 0x802);
  write_bytes(lbl, bad);
  CHECK_THROWS_AS(load_idx(img, lbl), FormatError);
  CHECK_THROWS_AS(load_idx(scratch("missing.idx"), lbl), std::runtime_error);
}

TEST_CASE("cifar fixture") {
  std::vector<std::uint8_t> rec{3};
  for (int i = 0; i < 3072; ++i) rec.push_back(static_cast<std::uint8_t>(i % 251));
  const auto path = scratch("one.bin");
  write_bytes(path, rec);
  const Normalization identity{{0, 0, 0}, {1, 1, 1}};
  const Dataset ds = load_cifar10({path}, &identity);
  REQUIRE(ds.size() == 1);
  CHECK(ds.labels[0] == 3);
  // Channel-planar: byte 1 + c*1024 + y*32 + x.
  CHECK(ds.images(0, 1, 2, 5) == static_cast<float>(((1024 + 2 * 32 + 5) % 251) / 255.0));
  CHECK(ds.images(0, 2, 31, 31) == static_cast<float>((3071 % 251) / 255.0));

  CHECK_THROWS_AS(load_cifar10({}), std::invalid_argument);
  rec.pop_back();
  write_bytes(path, rec);
  CHECK_THROWS_AS(load_cifar10({path}), FormatError);
}

TEST_CASE("batches") {
  const Dataset ds = toy(5);
  std::vector<std::size_t> sizes;
  std::set<std::size_t> seen;
  Batch b{Tensor4<float>(1, 1, 1, 1), {}, {}};
  auto it = batches(ds, 2, 9);
  CHECK(it.batch_count() == 3);
  while (it.next(b)) {
    sizes.push_back(b.labels.size());
    for (std::size_t i = 0; i < b.indices.size(); ++i) {
      seen.insert(b.indices[i]);
      CHECK(b.labels[i] == ds.labels[b.indices[i]]);
      CHECK(b.images(i, 0, 0, 0) == static_cast<float>(b.indices[i]));
    }
  }
  CHECK(sizes == std::vector<std::size_t>{2, 2, 1});
  CHECK(seen.size() == 5);

  auto whole = batches(ds, 5, 1);
  REQUIRE(whole.next(b));
  CHECK(std::set<std::size_t>(b.indices.begin(), b.indices.end()).size() == 5);
  CHECK_FALSE(whole.next(b));

  auto a1 = batches(ds, 2, 4), a2 = batches(ds, 2, 4);
  Batch x{Tensor4<float>(1, 1, 1, 1), {}, {}}, y{Tensor4<float>(1, 1, 1, 1), {}, {}};
  while (a1.next(x)) {
    REQUIRE(a2.next(y));
    CHECK(x.indices == y.indices);
  }
  CHECK(permutation(100, 1, 0) != permutation(100, 1, 1));
  CHECK_THROWS_AS(batches(ds, 0, 1), std::invalid_argument);
}

TEST_CASE("subset per class") {
  const Dataset ds = toy(100);
  const Dataset sub = subset_per_class(ds, 3, 7);
  CHECK(sub.size() == 30);
  std::vector<int> counts(10, 0);
  for (const int l : sub.labels) ++counts[static_cast<std::size_t>(l)];
  for (const int c : counts) CHECK(c == 3);
  CHECK(subset_per_class(ds, 3, 7).labels == sub.labels);
}

TEST_CASE("dataset validation") {
  Dataset ds = toy(4);
  CHECK_NOTHROW(ds.validate());
  ds.labels[2] = 10;
  CHECK_THROWS_AS(ds.validate(), std::invalid_argument);
  ds.labels.pop_back();
  CHECK_THROWS_AS(ds.validate(), DimensionError);
}

TEST_CASE("augmentation is seeded") {
  Dataset ds = toy(4);
  for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images.data()[i] = static_cast<float>(i);
  Tensor4<float> a = ds.images, b = ds.images;
  augment_flip_crop(a, CounterRng(1));
  augment_flip_crop(b, CounterRng(1));
  CHECK(a.storage() == b.storage());
}

TEST_CASE("run config parsing") {
  const auto j = nlohmann::json::parse(R"({"model": "alexnet_toy", "dataset": "mnist", "p": 0.9, "seed": 3,
    "epochs": 2, "batch_size": 16, "optimizer": {"lr": 0.01}, "subset_per_class": 5})");
  const RunConfig cfg = run_config_from_json(j);
  CHECK(cfg.model == ModelKind::alexnet_toy);
  CHECK(cfg.dataset == DatasetKind::mnist);
  CHECK(cfg.p == 0.9);
  CHECK(cfg.optimizer.lr == 0.01);
  CHECK(cfg.optimizer.momentum == 0.9);
  CHECK(cfg.subset_per_class == std::optional<std::size_t>(5));
  CHECK(run_config_from_json(to_json(cfg)).p == 0.9);

  CHECK_THROWS(run_config_from_json(nlohmann::json::parse(R"({"modle": "resnet_toy"})")));
  CHECK_THROWS(run_config_from_json(nlohmann::json::parse(R"({"p": 1.5})")));
  CHECK_THROWS(locate_dataset(DatasetKind::cifar10, scratch("nowhere")));
}

}
