#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "agp/bench.hpp"
#include "agp/config.hpp"
#include "agp/grad_stats.hpp"
#include "agp/train.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw CLI::ValidationError("--densities", "bad number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--densities", "empty list");
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int run_train(const std::string& config, std::optional<double> p, std::optional<std::uint64_t> seed,
              std::optional<std::size_t> threads, const std::string& out_dir) {
  agp::RunConfig cfg = agp::load_run_config(config);
  if (p) cfg.p = *p;
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  cfg.validate();
  agp::TrainOptions options;
  options.out_dir = out_dir;
  options.on_epoch = [](const agp::EpochRecord& e) {
    std::cout << "epoch " << e.epoch << "  loss " << e.train_loss << "  train_acc " << e.train_accuracy
              << "  test_acc " << e.test_accuracy << "  rho_nnz " << e.mean_rho_nnz << "  " << e.seconds << "s"
              << std::endl;
  };
  const agp::TrainResult r = agp::train(cfg, options);
  std::cout << "final test accuracy " << r.final_test_accuracy << "\nwrote " << out_dir << std::endl;
  return 0;
}

int run_bench(const std::string& shapes_path, const std::string& densities, const agp::BenchOptions& opts,
              const std::string& out) {
  const auto shapes = agp::load_bench_shapes(shapes_path);
  const auto rows = agp::bench_backward(shapes, parse_list(densities), opts);
  if (out.empty()) {
    agp::write_bench_csv(std::cout, rows);
  } else {
    auto f = open_out(out);
    agp::write_bench_csv(f, rows);
    std::cerr << "wrote " << out << std::endl;
  }
  return 0;
}

int run_grad_stats(const std::string& checkpoint, const std::string& layer, const std::string& data_dir,
                   const std::string& out_dir, std::size_t batch) {
  agp::GradStatsOptions opts;
  opts.batch_size = batch;
  std::optional<fs::path> dir;
  if (!data_dir.empty()) dir = data_dir;
  const auto r = agp::grad_stats(checkpoint, layer, dir, opts);
  const fs::path out(out_dir);
  fs::create_directories(out);
  auto hist = open_out(out / (r.layer + ".histogram.csv"));
  agp::write_histogram_csv(hist, r.histogram);
  auto layers = open_out(out / "layers.csv");
  agp::write_layer_stats_csv(layers, r.layers);
  std::cout << r.layer << "  sigma_hat " << r.selected.sigma_hat << "  tau " << r.selected.tau
            << "  density " << r.selected.density_before << " -> " << r.selected.density_after << "\nwrote "
            << out.string() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-gradient CNN training, backward benchmark and gradient statistics"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train a model from a JSON run config");
  std::string config;
  std::optional<double> p;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out_dir = "runs/latest";
  train->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--p", p, "Pruning rate in [0, 1)");
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  train->add_option("--out", out_dir, "Output directory")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Dense vs sparse conv backward timing");
  std::string shapes;
  std::string densities = "0.01,0.1,0.3,1.0";
  std::string bench_out;
  agp::BenchOptions bench_opts;
  bench->add_option("--shapes", shapes, "Shape file")->required()->check(CLI::ExistingFile);
  bench->add_option("--densities", densities, "Comma-separated target densities")->capture_default_str();
  bench->add_option("--repeats", bench_opts.repeats, "Timed repeats per point")->capture_default_str();
  bench->add_option("--warmup", bench_opts.warmup, "Untimed warmup runs")->capture_default_str();
  bench->add_option("--threads", bench_opts.threads, "Worker threads")->capture_default_str();
  bench->add_option("--seed", bench_opts.seed, "Random seed")->capture_default_str();
  bench->add_option("--out", bench_out, "CSV output path (default stdout)");

  auto* gs = app.add_subcommand("grad-stats", "Gradient histograms before and after pruning");
  std::string checkpoint;
  std::string layer;
  std::string data_dir;
  std::string gs_out = "grad_stats";
  std::size_t gs_batch = 128;
  gs->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  gs->add_option("--layer", layer, "Pruning site or conv layer name")->required();
  gs->add_option("--data-dir", data_dir, "Override the dataset directory stored in the checkpoint");
  gs->add_option("--batch", gs_batch, "Batch size")->capture_default_str();
  gs->add_option("--out", gs_out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(config, p, seed, threads, out_dir);
    if (*bench) return run_bench(shapes, densities, bench_opts, bench_out);
    if (*gs) return run_grad_stats(checkpoint, layer, data_dir, gs_out, gs_batch);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
