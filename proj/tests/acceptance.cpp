// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <chrono>
#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "agp/bench.hpp"
#include "agp/layers.hpp"
#include "agp/parallel.hpp"
#include "agp/pruning.hpp"
#include "agp/sparse.hpp"
#include "agp/train.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace agp;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s [%s]\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

constexpr int kGrid = 21;
constexpr std::size_t kDraws = 100000;

double grid_point(int k, double tau) { return -tau + (k + 1) * 2.0 * tau / (kGrid + 1); }

void unbiasedness_and_variance() {
  const double tau = 1.0;
  const auto start = std::chrono::steady_clock::now();
  double worst_bias = 0.0, worst_moment = 0.0;
  bool bound_ok = true;
  for (int k = 0; k < kGrid; ++k) {
    const double x = grid_point(k, tau);
    const std::vector<double> xs(kDraws, x);
    const auto y = stochastic_prune<double>(xs, tau, CounterRng::derive(2024, 0, static_cast<std::uint64_t>(k)));
    double sum = 0.0, sq = 0.0;
    for (const double v : y) {
      sum += v;
      sq += v * v;
    }
    const double mean = sum / kDraws;
    const double moment = sq / kDraws;
    worst_bias = std::max(worst_bias, std::abs(mean - x) / (4.0 * tau / std::sqrt(static_cast<double>(kDraws))));
    const double expect = std::abs(x) * tau;
    const double rel = expect > 0.0 ? std::abs(moment - expect) / expect : std::abs(moment);
    worst_moment = std::max(worst_moment, rel);
    bound_ok = bound_ok && moment <= tau * tau + x * x;
  }
  const double elapsed = seconds_since(start);
  report(1, worst_bias < 1.0 && elapsed < 10.0, "stochastic pruning is unbiased on (-tau, tau)",
         fmt("max |mean - x| = %.3f of the 4 tau/sqrt(N) bound; %.2f s", worst_bias, elapsed));
  report(2, worst_moment <= 0.05 && bound_ok, "second moment equals |x| tau and stays below tau^2 + x^2",
         fmt("max relative deviation %.4f (limit 0.05); bound ", worst_moment) + (bound_ok ? "held" : "violated"));
}

void threshold_calibration() {
  std::mt19937_64 gen(77);
  std::vector<double> g(1000000);
  oracle::fill_normal<double>(g, gen);
  const double sigma = estimate_sigma<double>(g);
  double worst = 0.0;
  std::string detail;
  for (const double p : {0.7, 0.8, 0.9, 0.99}) {
    const double tau = compute_threshold(sigma, p);
    std::size_t below = 0;
    for (const double v : g) below += std::abs(v) < tau;
    const double frac = static_cast<double>(below) / static_cast<double>(g.size());
    worst = std::max(worst, std::abs(frac - p));
    detail += fmt("p=%.2f: %.4f ", p, frac);
  }
  report(3, worst <= 0.005, "fraction below the threshold matches p on N(0,1)",
         detail + fmt("max error %.4f (limit 0.005)", worst));
}

void estimator_unbiasedness() {
  double worst = 0.0;
  std::string detail;
  std::mt19937_64 gen(5);
  for (const double sigma : {0.1, 1.0, 10.0}) {
    double sum = 0.0;
    std::vector<double> g(10000);
    for (int t = 0; t < 200; ++t) {
      oracle::fill_normal<double>(g, gen, sigma);
      sum += estimate_sigma<double>(g);
    }
    const double rel = std::abs(sum / 200.0 / sigma - 1.0);
    worst = std::max(worst, rel);
    detail += fmt("sigma=%g: %.5f ", sigma, rel);
  }
  report(4, worst <= 0.01, "sigma estimate is unbiased", detail + "(relative error, limit 0.01)");
}

void sparse_equals_dense() {
  std::mt19937_64 gen(31);
  std::uniform_int_distribution<std::size_t> dim(1, 256);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_sdmm = 0.0;
  for (int c = 0; c < 200; ++c) {
    const double dens = c == 0 ? 0.0 : c == 1 ? 1.0 : unit(gen);
    Matrix<float> a(dim(gen), dim(gen));
    for (auto& v : a.data()) v = unit(gen) < dens ? static_cast<float>(unit(gen) * 2.0 - 1.0) : 0.0f;
    Matrix<float> b(a.cols(), dim(gen));
    oracle::fill_normal(b.data(), gen);
    const auto got = sdmm(dense_to_csr(a), b);
    const auto want = oracle::matmul(a, b);
    worst_sdmm = std::max(worst_sdmm, max_relative_error<float>(got.data(), want.data()));
  }
  double worst_conv = 0.0;
  for (int c = 0; c < 30; ++c) {
    const std::size_t k = 1 + c % 3;
    const ConvSpec s{1 + c % 5, 1 + (c * 7) % 9, k, k, 1, k / 2};
    const Shape4 in{1 + c % 3, s.in_channels, 5 + c % 4, 6 + c % 3};
    Tensor4<float> x(in);
    oracle::fill_normal(x.data(), gen);
    Matrix<float> w(s.out_channels, s.patch_size());
    oracle::fill_normal(w.data(), gen);
    Tensor4<float> d_o(in.n, s.out_channels, s.out_h(in.h), s.out_w(in.w));
    oracle::fill_normal(d_o.data(), gen);
    // p = 0 leaves the gradient untouched.
    dbtd_prune_inplace<float>(d_o.data(), 0.0, CounterRng(1));
    const auto di_s = conv_backward_data_sparse(w, s, d_o, in);
    const auto di_d = conv_backward_data_dense(w, s, d_o, in);
    const auto dw_s = conv_backward_weights_sparse(s, x, d_o);
    const auto dw_d = conv_backward_weights_dense(s, x, d_o);
    worst_conv = std::max(worst_conv, max_relative_error<float>(di_s.data(), di_d.data()));
    worst_conv = std::max(worst_conv, max_relative_error<float>(dw_s.data(), dw_d.data()));
  }
  report(5, worst_sdmm < 1e-5 && worst_conv < 1e-5, "sparse kernels match dense references",
         fmt("sdmm max rel err %.2e over 200 cases; conv backward max rel err %.2e (limit 1e-5)", worst_sdmm,
             worst_conv));
}

void gradient_correctness() {
  std::mt19937_64 gen(61);
  std::uniform_int_distribution<std::size_t> small(1, 3);
  constexpr int kConfigs = 20;
  std::vector<std::pair<std::string, double>> worst;
  auto run = [&](const std::string& name, const std::function<double()>& one) {
    double w = 0.0;
    for (int i = 0; i < kConfigs; ++i) w = std::max(w, one());
    worst.emplace_back(name, w);
  };
  run("conv", [&] {
    const std::size_t k = small(gen);
    const std::size_t stride = small(gen) == 1 ? 2 : 1;
    const ConvSpec s{small(gen), small(gen), k, k, stride, small(gen) - 1};
    std::size_t h = 3 + small(gen);
    while ((h + 2 * s.padding < k) || (h + 2 * s.padding - k) % stride) ++h;
    Conv2d<double> conv("conv", s);
    oracle::fill_normal(conv.weights().data(), gen);
    oracle::fill_normal<double>(conv.bias(), gen);
    Tensor4<double> x(small(gen), s.in_channels, h, h);
    oracle::fill_normal(x.data(), gen);
    return oracle::gradient_check(conv, x, gen);
  });
  run("relu", [&] {
    ReLU<double> relu("relu");
    Tensor4<double> x(small(gen), small(gen), 3, 4);
    oracle::fill_normal(x.data(), gen);
    return oracle::gradient_check(relu, x, gen);
  });
  run("batchnorm", [&] {
    const std::size_t c = small(gen);
    BatchNorm2d<double> bn("bn", c);
    oracle::fill_normal<double>(bn.gamma(), gen);
    oracle::fill_normal<double>(bn.beta(), gen);
    Tensor4<double> x(1 + small(gen), c, small(gen), 1 + small(gen));
    oracle::fill_normal(x.data(), gen, 3.0);
    return oracle::gradient_check(bn, x, gen);
  });
  run("linear", [&] {
    Tensor4<double> x(small(gen), small(gen), small(gen), small(gen));
    Linear<double> fc("fc", x.c() * x.h() * x.w(), 1 + small(gen));
    oracle::fill_normal(fc.weights().data(), gen);
    oracle::fill_normal<double>(fc.bias(), gen);
    oracle::fill_normal(x.data(), gen);
    return oracle::gradient_check(fc, x, gen);
  });
  run("maxpool", [&] {
    MaxPool2d<double> mp("mp", 2, small(gen) == 3 ? 1 : 2);
    Tensor4<double> x(small(gen), small(gen), 4 + small(gen), 4 + small(gen));
    oracle::fill_normal(x.data(), gen);
    return oracle::gradient_check(mp, x, gen);
  });
  run("avgpool", [&] {
    const std::size_t k = small(gen) == 1 ? 0 : 2;
    AvgPool2d<double> ap("ap", k, k);
    Tensor4<double> x(small(gen), small(gen), 2 * small(gen), 2 * small(gen));
    oracle::fill_normal(x.data(), gen);
    return oracle::gradient_check(ap, x, gen);
  });
  run("softmax_xent", [&] {
    const std::size_t n = small(gen), k = 1 + small(gen);
    Tensor4<double> logits(n, k, 1, 1);
    oracle::fill_normal(logits.data(), gen, 2.0);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(gen() % k);
    const auto r = softmax_xent(logits, labels);
    const auto num = oracle::numeric_grad(logits.data(), [&] { return softmax_xent(logits, labels).loss; });
    return oracle::rel_error(r.dlogits.data(), num);
  });
  bool ok = true;
  std::string detail;
  for (const auto& [name, w] : worst) {
    ok = ok && w < 1e-3;
    detail += name + fmt(" %.1e ", w);
  }
  report(6, ok, "finite-difference gradient checks, 20 configurations per layer", detail + "(limit 1e-3)");
}

void backward_speedup() {
  const std::vector<BenchShape> shapes{{"res_256x8x8", 16, 256, 256, 8, 8, 3, 1, 1}};
  const auto rows = bench_backward(shapes, {0.1, 1.0}, BenchOptions{20, 3, 1, 0});
  const auto& sparse = rows[0];
  const auto& full = rows[1];
  const bool ok = sparse.speedup >= 1.5 && full.speedup >= 0.5 && sparse.max_rel_error_di < 1e-5 &&
                  sparse.max_rel_error_dw < 1e-5;
  report(9, ok, "sparse backward speedup on 256->256, 8x8, batch 16, one thread",
         fmt("density %.3f: %.2fx (min 1.5); ", sparse.density_actual, sparse.speedup) +
             fmt("density 1.0: %.2fx (min 0.5)", full.speedup));
}

void determinism() {
  const Dataset train_set = synthetic::make(200, 3, 16, 10, 1);
  const Dataset test_set = synthetic::make(100, 3, 16, 10, 2);
  RunConfig cfg;
  cfg.model = ModelKind::resnet_toy;
  cfg.p = 0.9;
  cfg.seed = 11;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.optimizer.lr = 0.05;
  cfg.augment = true;
  cfg.threads = 1;
  const fs::path root = fs::temp_directory_path() / "agp_acceptance_determinism";
  fs::remove_all(root);
  train(cfg, train_set, test_set, TrainOptions{root / "a", {}});
  train(cfg, train_set, test_set, TrainOptions{root / "b", {}});
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = read(root / "a" / "metrics.jsonl");
  const std::string b = read(root / "b" / "metrics.jsonl");
  const auto steps = static_cast<double>(std::count(a.begin(), a.end(), '\n'));
  report(10, !a.empty() && a == b, "two seeded single-thread runs give identical metrics streams",
         fmt("%.0f records, %.0f bytes, identical: ", steps, static_cast<double>(a.size())) + (a == b ? "yes" : "no"));
}

}  // namespace

int main() {
  set_num_threads(1);
  unbiasedness_and_variance();
  threshold_calibration();
  estimator_unbiasedness();
  sparse_equals_dense();
  gradient_correctness();
  std::printf("SKIP criterion 7: needs CIFAR-10, run by the acceptance.training test\n");
  std::printf("SKIP criterion 8: needs CIFAR-10, run by the acceptance.training test\n");
  backward_speedup();
  determinism();
  std::printf("%d criteria failed\n", failures);
  return failures;
}
