#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "agp/config.hpp"
#include "agp/data.hpp"
#include "agp/models.hpp"

namespace agp {

struct StepMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;  // within the epoch
  double loss = 0.0;
  double lr = 0.0;
  double rho_nnz = 0.0;  // non-zero fraction of the dO tensors entering conv backward
  std::vector<std::pair<std::string, double>> density_after;  // per pruning site
  double forward_seconds = 0.0;
  double agbp_seconds = 0.0;
  double wgc_seconds = 0.0;
  double update_seconds = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double mean_rho_nnz = 0.0;
  double agbp_seconds = 0.0;
  double wgc_seconds = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  double final_test_accuracy = 0.0;
  std::size_t steps = 0;
};

// Output layout under `out_dir` (created if needed):
//   metrics.jsonl   one record per step; deterministic fields only
//   timings.jsonl   one record per step with per-stage wall-clock
//   epochs.jsonl    one record per epoch (losses, accuracies, mean density)
//   summary.json    final summary
//   checkpoint.bin  model after the last epoch
struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Loads the datasets named by cfg and trains.
TrainResult train(const RunConfig& cfg, const TrainOptions& options = {});

// Trains on in-memory data. `test` is evaluated after every epoch.
TrainResult train(const RunConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                  const TrainOptions& options = {});

double evaluate(Model<float>& model, const Dataset& ds, std::size_t batch_size = 256,
                std::optional<std::size_t> limit = std::nullopt);

// Loads the train and test splits named by cfg; the test split is
// standardized with training statistics. Applies subset_per_class.
std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg);

}  // namespace agp
