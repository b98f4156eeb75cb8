#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "agp/data.hpp"
#include "agp/models.hpp"

namespace agp {

struct LayerGradStats {
  std::string layer;  // pruning site name
  double sigma_hat = 0.0;
  double tau = 0.0;
  std::size_t length = 0;
  double density_before = 0.0;
  double density_after = 0.0;
};

// Histogram bin [lo, hi) on the positive side and (lo, hi] on the negative
// side. Exact zeros get their own row with lo == hi == 0. Bin edges include
// 0 and +-tau (tau as stored in the gradient's precision), so the pruned
// histogram has no mass strictly inside (0, tau).
struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count_before = 0;
  std::size_t count_after = 0;
};

struct GradStatsResult {
  std::string layer;
  LayerGradStats selected;
  std::vector<LayerGradStats> layers;  // every pruning site, network order
  std::vector<HistogramBin> histogram;
  std::vector<float> before;  // the selected site's gradient, pre- and post-pruning
  std::vector<float> after;
};

struct GradStatsOptions {
  std::size_t batch_size = 128;
  std::size_t bins_per_side = 32;  // split evenly between (0, tau) and [tau, max]
};

// Resolves a pruning-site name. Accepts the site name itself or the name of
// the convolution it belongs to; throws std::invalid_argument otherwise.
PruneLayer<float>& find_prune_site(Model<float>& model, const std::string& layer);

// One training-mode forward and backward pass over the first batch of `ds`.
GradStatsResult grad_stats(Model<float>& model, const Dataset& ds, const std::string& layer,
                           const GradStatsOptions& options = {});

// Loads the checkpoint and the test split of the dataset it was trained on.
GradStatsResult grad_stats(const std::filesystem::path& checkpoint, const std::string& layer,
                           std::optional<std::filesystem::path> data_dir = std::nullopt,
                           const GradStatsOptions& options = {});

std::vector<HistogramBin> gradient_histogram(std::span<const float> before, std::span<const float> after,
                                             double tau, std::size_t bins_per_side);

void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins);
void write_layer_stats_csv(std::ostream& out, const std::vector<LayerGradStats>& layers);

}  // namespace agp
