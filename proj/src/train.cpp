#include "agp/train.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "agp/checkpoint.hpp"
#include "agp/optim.hpp"
#include "agp/parallel.hpp"

namespace agp {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::ofstream open_stream(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

ordered_json metrics_record(const StepMetrics& m) {
  ordered_json j;
  j["epoch"] = m.epoch;
  j["step"] = m.step;
  j["loss"] = m.loss;
  j["lr"] = m.lr;
  j["rho_nnz"] = m.rho_nnz;
  ordered_json dens = ordered_json::object();
  for (const auto& [name, d] : m.density_after) dens[name] = d;
  j["density_after"] = std::move(dens);
  return j;
}

ordered_json timing_record(const StepMetrics& m) {
  ordered_json j;
  j["epoch"] = m.epoch;
  j["step"] = m.step;
  j["forward_s"] = m.forward_seconds;
  j["agbp_s"] = m.agbp_seconds;
  j["wgc_s"] = m.wgc_seconds;
  j["update_s"] = m.update_seconds;
  return j;
}

ordered_json epoch_record(const EpochRecord& e) {
  ordered_json j;
  j["epoch"] = e.epoch;
  j["train_loss"] = e.train_loss;
  j["train_accuracy"] = e.train_accuracy;
  j["test_accuracy"] = e.test_accuracy;
  j["mean_rho_nnz"] = e.mean_rho_nnz;
  j["agbp_s"] = e.agbp_seconds;
  j["wgc_s"] = e.wgc_seconds;
  j["seconds"] = e.seconds;
  return j;
}

bool has_batch_norm(Model<float>& model) {
  bool found = false;
  model.net().visit([&](Layer<float>& l) { found = found || dynamic_cast<BatchNorm2d<float>*>(&l) != nullptr; });
  return found;
}

}  // namespace

double evaluate(Model<float>& model, const Dataset& ds, std::size_t batch_size, std::optional<std::size_t> limit) {
  const std::size_t n = limit ? std::min(*limit, ds.size()) : ds.size();
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Batch b = gather(ds, idx);
    const auto pred = argmax_rows(model.forward(b.images, Mode::eval));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg) {
  const DatasetFiles files = locate_dataset(cfg.dataset, cfg.data_dir);
  Dataset train_set = cfg.dataset == DatasetKind::mnist ? load_idx(files.train[0], files.train[1])
                                                        : load_cifar10(files.train);
  Dataset test_set = cfg.dataset == DatasetKind::mnist
                         ? load_idx(files.test[0], files.test[1], &train_set.normalization)
                         : load_cifar10(files.test, &train_set.normalization);
  if (cfg.subset_per_class) train_set = subset_per_class(train_set, *cfg.subset_per_class, cfg.seed);
  return {std::move(train_set), std::move(test_set)};
}

TrainResult train(const RunConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  auto [train_set, test_set] = load_datasets(cfg);
  return train(cfg, train_set, test_set, options);
}

TrainResult train(const RunConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                  const TrainOptions& options) {
  cfg.validate();
  train_set.validate();
  test_set.validate();
  set_num_threads(cfg.threads);

  const InputSpec input{train_set.images.c(), train_set.images.h(), train_set.images.w(), train_set.num_classes};
  Model<float> model(cfg.model, input, PruneConfig{cfg.p, placement_for(cfg.model), cfg.seed}, cfg.seed);
  model.set_backward_path(cfg.backward);
  Sgd<float> opt(model.params(), cfg.optimizer);
  const bool needs_pairs = has_batch_norm(model);

  std::ofstream metrics_out, timings_out, epochs_out;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    metrics_out = open_stream(*options.out_dir / "metrics.jsonl");
    timings_out = open_stream(*options.out_dir / "timings.jsonl");
    epochs_out = open_stream(*options.out_dir / "epochs.jsonl");
  }

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t correct = 0;
    double rho_sum = 0.0;
    std::size_t step = 0;

    BatchIterator it = batches(train_set, cfg.batch_size, cfg.seed, epoch);
    Batch batch{Tensor4<float>(1, 1, 1, 1), {}, {}};
    while (it.next(batch)) {
      // Training-mode batch norm is undefined for a single example.
      if (needs_pairs && batch.labels.size() < 2) continue;
      if (cfg.augment) {
        augment_flip_crop(batch.images, CounterRng::derive(cfg.seed, 0xa06, epoch * 1000003ULL + step));
      }
      StepMetrics m;
      m.epoch = epoch;
      m.step = step;
      m.lr = lr_at(epoch, cfg.optimizer);

      auto t = Clock::now();
      const Tensor4<float> logits = model.forward(batch.images, Mode::train);
      m.forward_seconds = since(t);
      const XentResult<float> xent = softmax_xent(logits, std::span<const int>(batch.labels));
      if (!std::isfinite(xent.loss)) {
        throw std::runtime_error("non-finite loss " + std::to_string(xent.loss) + " at epoch " +
                                 std::to_string(epoch) + " step " + std::to_string(step) +
                                 " (lr " + std::to_string(m.lr) + ", p " + std::to_string(cfg.p) + ")");
      }
      m.loss = xent.loss;
      model.backward(xent.dlogits);
      const StageTimes stages = model.take_stage_times();
      m.agbp_seconds = stages.agbp_seconds;
      m.wgc_seconds = stages.wgc_seconds;
      m.rho_nnz = model.grad_density();
      for (const auto* pl : model.prune_layers()) m.density_after.emplace_back(pl->name(), pl->last_stats().density_after);

      t = Clock::now();
      opt.step(epoch);
      m.update_seconds = since(t);

      loss_sum += xent.loss * static_cast<double>(batch.labels.size());
      seen += batch.labels.size();
      correct += xent.correct;
      rho_sum += m.rho_nnz;
      rec.agbp_seconds += m.agbp_seconds;
      rec.wgc_seconds += m.wgc_seconds;
      if (metrics_out.is_open()) {
        metrics_out << metrics_record(m).dump() << '\n';
        timings_out << timing_record(m).dump() << '\n';
      }
      ++step;
    }
    if (step == 0) throw std::runtime_error("epoch " + std::to_string(epoch) + " ran no training steps");
    result.steps += step;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    rec.mean_rho_nnz = rho_sum / static_cast<double>(step);
    rec.test_accuracy = evaluate(model, test_set, 256, cfg.test_limit);
    rec.seconds = since(epoch_start);
    if (epochs_out.is_open()) {
      epochs_out << epoch_record(rec).dump() << '\n';
      epochs_out.flush();
      metrics_out.flush();
      timings_out.flush();
    }
    if (options.on_epoch) options.on_epoch(rec);
    result.epochs.push_back(rec);
  }
  result.final_test_accuracy = result.epochs.back().test_accuracy;

  if (options.out_dir) {
    CheckpointMeta meta{cfg.model, input, train_set.normalization, cfg};
    save_checkpoint(*options.out_dir / "checkpoint.bin", model, meta);
    ordered_json summary;
    summary["final_test_accuracy"] = result.final_test_accuracy;
    summary["steps"] = result.steps;
    summary["config"] = to_json(cfg);
    ordered_json eps = ordered_json::array();
    for (const auto& e : result.epochs) eps.push_back(epoch_record(e));
    summary["epochs"] = std::move(eps);
    open_stream(*options.out_dir / "summary.json") << summary.dump(2) << '\n';
  }
  return result;
}

}  // namespace agp
