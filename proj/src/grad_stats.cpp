#include "agp/grad_stats.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "agp/checkpoint.hpp"

namespace agp {

PruneLayer<float>& find_prune_site(Model<float>& model, const std::string& layer) {
  for (auto* p : model.prune_layers()) {
    if (p->name() == layer || p->name() == layer + ".prune") return *p;
  }
  std::string known;
  for (auto* p : model.prune_layers()) known += (known.empty() ? "" : ", ") + p->name();
  throw std::invalid_argument("unknown layer '" + layer + "'; pruning sites: " + known);
}

std::vector<HistogramBin> gradient_histogram(std::span<const float> before, std::span<const float> after,
                                             double tau, std::size_t bins_per_side) {
  if (before.size() != after.size()) throw std::invalid_argument("gradient_histogram: length mismatch");
  if (bins_per_side < 2) throw std::invalid_argument("gradient_histogram: need at least 2 bins per side");
  double max_mag = 0.0;
  for (const float v : before) max_mag = std::max(max_mag, std::abs(static_cast<double>(v)));
  for (const float v : after) max_mag = std::max(max_mag, std::abs(static_cast<double>(v)));

  // Positive-side edges: [0, tau) split into `inner` bins, [tau, max] into `outer`.
  const double t = static_cast<double>(static_cast<float>(tau));
  std::vector<double> edges;
  if (t > 0.0 && max_mag > t) {
    const std::size_t inner = bins_per_side / 2;
    const std::size_t outer = bins_per_side - inner;
    for (std::size_t i = 0; i < inner; ++i) edges.push_back(t * static_cast<double>(i) / static_cast<double>(inner));
    for (std::size_t i = 0; i <= outer; ++i) {
      edges.push_back(t + (max_mag - t) * static_cast<double>(i) / static_cast<double>(outer));
    }
  } else {
    const double top = std::max({max_mag, t, 1e-30});
    for (std::size_t i = 0; i <= bins_per_side; ++i) {
      edges.push_back(top * static_cast<double>(i) / static_cast<double>(bins_per_side));
    }
  }
  const std::size_t nb = edges.size() - 1;
  std::vector<std::size_t> pos_b(nb), pos_a(nb), neg_b(nb), neg_a(nb);
  std::size_t zero_b = 0, zero_a = 0;

  auto place = [&](float v, std::vector<std::size_t>& pos, std::vector<std::size_t>& neg, std::size_t& zero) {
    if (v == 0.0f) {
      ++zero;
      return;
    }
    const double m = std::abs(static_cast<double>(v));
    auto it = std::upper_bound(edges.begin(), edges.end(), m);
    std::size_t bin = static_cast<std::size_t>(it - edges.begin());
    bin = bin == 0 ? 0 : std::min(bin - 1, nb - 1);
    (v > 0.0f ? pos : neg)[bin]++;
  };
  for (const float v : before) place(v, pos_b, neg_b, zero_b);
  for (const float v : after) place(v, pos_a, neg_a, zero_a);

  std::vector<HistogramBin> out;
  for (std::size_t i = nb; i-- > 0;) out.push_back({-edges[i + 1], -edges[i], neg_b[i], neg_a[i]});
  out.push_back({0.0, 0.0, zero_b, zero_a});
  for (std::size_t i = 0; i < nb; ++i) out.push_back({edges[i], edges[i + 1], pos_b[i], pos_a[i]});
  return out;
}

GradStatsResult grad_stats(Model<float>& model, const Dataset& ds, const std::string& layer,
                           const GradStatsOptions& options) {
  PruneLayer<float>& site = find_prune_site(model, layer);
  if (ds.size() == 0) throw std::invalid_argument("grad_stats: empty dataset");
  const std::size_t n = std::min(options.batch_size, ds.size());
  if (n < 2) throw std::invalid_argument("grad_stats: need a batch of at least 2 images");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const Batch batch = gather(ds, idx);

  site.set_capture(true);
  const Tensor4<float> logits = model.forward(batch.images, Mode::train);
  const XentResult<float> xent = softmax_xent(logits, std::span<const int>(batch.labels));
  model.backward(xent.dlogits);
  site.set_capture(false);

  GradStatsResult result;
  result.layer = site.name();
  for (auto* p : model.prune_layers()) {
    const PruneStats& s = p->last_stats();
    LayerGradStats row{p->name(), s.sigma_hat, s.tau, s.length, 0.0, s.density_after};
    row.density_before = s.length ? static_cast<double>(s.nnz_before) / static_cast<double>(s.length) : 0.0;
    if (p == &site) result.selected = row;
    result.layers.push_back(row);
  }
  result.before = site.captured_before();
  result.after = site.captured_after();
  result.histogram = gradient_histogram(result.before, result.after, result.selected.tau, options.bins_per_side);
  return result;
}

GradStatsResult grad_stats(const std::filesystem::path& checkpoint, const std::string& layer,
                           std::optional<std::filesystem::path> data_dir, const GradStatsOptions& options) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  find_prune_site(*ck.model, layer);
  const RunConfig& run = ck.meta.run;
  const DatasetFiles files = locate_dataset(run.dataset, data_dir ? *data_dir : run.data_dir);
  const Dataset test = run.dataset == DatasetKind::mnist
                           ? load_idx(files.test[0], files.test[1], &ck.meta.normalization)
                           : load_cifar10(files.test, &ck.meta.normalization);
  return grad_stats(*ck.model, test, layer, options);
}

void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins) {
  out.precision(9);
  out << "lo,hi,count_before,count_after\n";
  for (const auto& b : bins) out << b.lo << ',' << b.hi << ',' << b.count_before << ',' << b.count_after << '\n';
}

void write_layer_stats_csv(std::ostream& out, const std::vector<LayerGradStats>& layers) {
  out.precision(9);
  out << "layer,length,sigma_hat,tau,density_before,density_after\n";
  for (const auto& l : layers) {
    out << l.layer << ',' << l.length << ',' << l.sigma_hat << ',' << l.tau << ',' << l.density_before << ','
        << l.density_after << '\n';
  }
}

}  // namespace agp
