#include "agp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "agp/layers.hpp"
#include "agp/parallel.hpp"
#include "agp/pruning.hpp"
#include "agp/rng.hpp"

namespace agp {

ConvSpec BenchShape::conv() const {
  return ConvSpec{in_channels, out_channels, kernel, kernel, stride, padding};
}

std::vector<BenchShape> parse_bench_shapes(std::istream& in) {
  std::vector<BenchShape> shapes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    BenchShape s;
    if (!(ls >> s.name >> s.batch >> s.in_channels >> s.out_channels >> s.height >> s.width >> s.kernel >>
          s.stride >> s.padding)) {
      throw std::invalid_argument("bench shapes line " + std::to_string(lineno) + ": expected 9 fields");
    }
    std::string extra;
    if (ls >> extra) throw std::invalid_argument("bench shapes line " + std::to_string(lineno) + ": trailing field");
    if (s.batch == 0 || s.height == 0 || s.width == 0) {
      throw std::invalid_argument("bench shapes line " + std::to_string(lineno) + ": zero extent");
    }
    const ConvSpec spec = s.conv();
    spec.validate();
    spec.out_h(s.height);
    spec.out_w(s.width);
    shapes.push_back(std::move(s));
  }
  if (shapes.empty()) throw std::invalid_argument("bench shapes: no shapes given");
  return shapes;
}

std::vector<BenchShape> load_bench_shapes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_bench_shapes(in);
}

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <typename F>
double timed(F&& f) {
  const auto t = Clock::now();
  f();
  return std::chrono::duration<double>(Clock::now() - t).count();
}

void fill_normal(std::span<float> out, std::mt19937_64& gen, float scale = 1.0f) {
  std::normal_distribution<float> dist(0.0f, scale);
  for (float& v : out) v = dist(gen);
}

}  // namespace

std::vector<BenchRow> bench_backward(const std::vector<BenchShape>& shapes, const std::vector<double>& densities,
                                     const BenchOptions& options) {
  if (options.repeats == 0) throw std::invalid_argument("bench_backward: repeats must be >= 1");
  for (const double d : densities) {
    if (!(d > 0.0 && d <= 1.0)) throw std::invalid_argument("bench_backward: densities must lie in (0, 1]");
  }
  const std::size_t saved_threads = num_threads();
  set_num_threads(options.threads);

  std::vector<BenchRow> rows;
  std::uint64_t shape_id = 0;
  for (const BenchShape& shape : shapes) {
    const ConvSpec spec = shape.conv();
    const Shape4 in_shape{shape.batch, shape.in_channels, shape.height, shape.width};
    const Shape4 out_shape{shape.batch, shape.out_channels, spec.out_h(shape.height), spec.out_w(shape.width)};

    std::mt19937_64 gen(options.seed ^ (0x9e3779b97f4a7c15ULL * (shape_id + 1)));
    Tensor4<float> input(in_shape);
    fill_normal(input.data(), gen);
    Matrix<float> weights(spec.out_channels, spec.patch_size());
    fill_normal(weights.data(), gen, 0.1f);
    Tensor4<float> raw(out_shape);
    fill_normal(raw.data(), gen);

    for (const double target : densities) {
      Tensor4<float> d_o = raw;
      const double p = rate_for_density(std::max(target, min_pruned_density()));
      PruneStats stats = dbtd_prune_inplace<float>(d_o.data(), p, CounterRng::derive(options.seed, shape_id, 0));
      if (stats.density_after > target) {
        // Below the DBTD floor: drop survivors uniformly to reach the target.
        const double keep = target / stats.density_after;
        const CounterRng mask = CounterRng::derive(options.seed, shape_id, 1);
        auto g = d_o.data();
        std::size_t nnz = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (g[i] != 0.0f && mask.uniform(i) >= keep) g[i] = 0.0f;
          nnz += g[i] != 0.0f;
        }
        stats.density_after = static_cast<double>(nnz) / static_cast<double>(g.size());
      }

      BenchRow row;
      row.shape = shape.name;
      row.density_target = target;
      row.density_actual = stats.density_after;

      std::vector<double> da, dw, sa, sw, dt, st;
      Tensor4<float> di_dense(in_shape), di_sparse(in_shape);
      Matrix<float> dw_dense, dw_sparse;
      for (std::size_t r = 0; r < options.warmup + options.repeats; ++r) {
        const double t_da = timed([&] { di_dense = conv_backward_data_dense(weights, spec, d_o, in_shape); });
        const double t_dw = timed([&] { dw_dense = conv_backward_weights_dense(spec, input, d_o); });
        const double t_sa = timed([&] { di_sparse = conv_backward_data_sparse(weights, spec, d_o, in_shape); });
        const double t_sw = timed([&] { dw_sparse = conv_backward_weights_sparse(spec, input, d_o); });
        if (r < options.warmup) continue;
        da.push_back(t_da);
        dw.push_back(t_dw);
        sa.push_back(t_sa);
        sw.push_back(t_sw);
        dt.push_back(t_da + t_dw);
        st.push_back(t_sa + t_sw);
      }
      row.dense_agbp_seconds = median(da);
      row.dense_wgc_seconds = median(dw);
      row.sparse_agbp_seconds = median(sa);
      row.sparse_wgc_seconds = median(sw);
      row.dense_seconds = median(dt);
      row.sparse_seconds = median(st);
      row.speedup = row.sparse_seconds > 0.0 ? row.dense_seconds / row.sparse_seconds : 0.0;
      row.max_rel_error_di = max_relative_error<float>(di_sparse.data(), di_dense.data());
      row.max_rel_error_dw = max_relative_error<float>(dw_sparse.data(), dw_dense.data());
      rows.push_back(row);
    }
    ++shape_id;
  }
  set_num_threads(saved_threads);
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "shape,density_target,density_actual,dense_agbp_s,dense_wgc_s,sparse_agbp_s,sparse_wgc_s,"
         "dense_s,sparse_s,speedup,max_rel_error_di,max_rel_error_dw\n";
  out.precision(9);
  for (const BenchRow& r : rows) {
    out << r.shape << ',' << r.density_target << ',' << r.density_actual << ',' << r.dense_agbp_seconds << ','
        << r.dense_wgc_seconds << ',' << r.sparse_agbp_seconds << ',' << r.sparse_wgc_seconds << ','
        << r.dense_seconds << ',' << r.sparse_seconds << ',' << r.speedup << ',' << r.max_rel_error_di << ','
        << r.max_rel_error_dw << '\n';
  }
}

}  // namespace agp
