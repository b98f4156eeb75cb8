#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "agp/layers.hpp"
#include "agp/models.hpp"
#include "agp/optim.hpp"

#include "json.hpp"

namespace agp {

enum class DatasetKind { mnist, cifar10 };

std::string_view to_string(DatasetKind kind);
DatasetKind dataset_from_string(std::string_view s);

// Field names match the JSON config keys one to one.
struct RunConfig {
  ModelKind model = ModelKind::resnet_toy;
  DatasetKind dataset = DatasetKind::cifar10;
  double p = 0.0;
  std::uint64_t seed = 0;
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  SgdConfig optimizer;
  std::optional<std::size_t> subset_per_class;
  std::filesystem::path data_dir;
  bool augment = false;
  std::size_t threads = 1;
  std::optional<std::size_t> test_limit;  // evaluate on the first N test images only
  BackwardPath backward = BackwardPath::sparse;

  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

struct DatasetFiles {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
};

// Standard file names under data_dir (a nested cifar-10-batches-bin/ is also
// accepted). Throws if any file is missing.
DatasetFiles locate_dataset(DatasetKind kind, const std::filesystem::path& data_dir);

}  // namespace agp
