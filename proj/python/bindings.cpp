#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "agp/bench.hpp"
#include "agp/errors.hpp"
#include "agp/im2col.hpp"
#include "agp/pruning.hpp"
#include "agp/sparse.hpp"
#include "agp/train.hpp"

namespace py = pybind11;
using namespace agp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const Array& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

Array to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  Array out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Matrix<double> to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  return Matrix<double>(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                        std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_matrix(const Matrix<double>& m) {
  return to_array(std::vector<double>(m.data().begin(), m.data().end()),
                  {static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
}

py::dict stats_dict(const PruneStats& s) {
  py::dict d;
  d["sigma_hat"] = s.sigma_hat;
  d["tau"] = s.tau;
  d["nnz_before"] = s.nnz_before;
  d["nnz_after"] = s.nnz_after;
  d["length"] = s.length;
  d["density_after"] = s.density_after;
  return d;
}

ConvSpec make_spec(std::size_t in_channels, std::size_t kernel_h, std::size_t kernel_w, std::size_t stride,
                   std::size_t padding) {
  ConvSpec s{in_channels, 1, kernel_h, kernel_w, stride, padding};
  s.validate();
  return s;
}

}  // namespace

PYBIND11_MODULE(_agprune, m) {
  m.doc() = "Stochastic activation-gradient pruning and sparse convolution backward kernels";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);

  m.def("estimate_sigma", [](const Array& g) { return estimate_sigma<double>(view(g)); }, py::arg("g"));
  m.def("norm_cdf", &norm_cdf, py::arg("z"));
  m.def("inv_norm_cdf", &inv_norm_cdf, py::arg("q"));
  m.def("compute_threshold", &compute_threshold, py::arg("sigma_hat"), py::arg("p"));
  m.def("expected_zero_fraction", &expected_zero_fraction, py::arg("p"));
  m.def("rate_for_density", &rate_for_density, py::arg("density"));

  m.def(
      "stochastic_prune",
      [](const Array& g, double tau, std::uint64_t seed, std::uint64_t layer_id, std::uint64_t step) {
        Array out(std::vector<py::ssize_t>(g.shape(), g.shape() + g.ndim()));
        stochastic_prune<double>(view(g), tau, CounterRng::derive(seed, layer_id, step),
                                 {out.mutable_data(), static_cast<std::size_t>(out.size())});
        return out;
      },
      py::arg("g"), py::arg("tau"), py::arg("seed") = 0, py::arg("layer_id") = 0, py::arg("step") = 0);

  m.def(
      "dbtd_prune",
      [](const Array& g, double p, std::uint64_t seed, std::uint64_t layer_id, std::uint64_t step) {
        Array out(std::vector<py::ssize_t>(g.shape(), g.shape() + g.ndim()));
        std::copy(g.data(), g.data() + g.size(), out.mutable_data());
        PruneConfig{p}.validate();
        const PruneStats s = dbtd_prune_inplace<double>({out.mutable_data(), static_cast<std::size_t>(out.size())},
                                                        p, CounterRng::derive(seed, layer_id, step));
        return py::make_tuple(out, stats_dict(s));
      },
      py::arg("g"), py::arg("p"), py::arg("seed") = 0, py::arg("layer_id") = 0, py::arg("step") = 0,
      "Returns (pruned array, stats dict).");

  m.def(
      "dense_to_csr",
      [](const Array& a) {
        const auto c = dense_to_csr(to_matrix(a));
        return py::make_tuple(c.row_ptr, c.col_idx, c.values, py::make_tuple(c.rows, c.cols));
      },
      py::arg("a"), "Returns (row_ptr, col_idx, values, shape).");

  m.def(
      "sdmm", [](const Array& a, const Array& b) { return from_matrix(sdmm(dense_to_csr(to_matrix(a)), to_matrix(b))); },
      py::arg("a"), py::arg("b"), "Sparse (CSR of a) times dense b.");

  m.def(
      "im2col",
      [](const Array& image, std::size_t kernel_h, std::size_t kernel_w, std::size_t stride, std::size_t padding) {
        if (image.ndim() != 3) throw DimensionError("im2col: expected a (channels, h, w) array");
        const auto c = static_cast<std::size_t>(image.shape(0));
        const auto h = static_cast<std::size_t>(image.shape(1));
        const auto w = static_cast<std::size_t>(image.shape(2));
        Matrix<double> out;
        im2col<double>(view(image), h, w, make_spec(c, kernel_h, kernel_w, stride, padding), out);
        return from_matrix(out);
      },
      py::arg("image"), py::arg("kernel_h"), py::arg("kernel_w"), py::arg("stride") = 1, py::arg("padding") = 0);

  m.def(
      "col2im",
      [](const Array& cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t kernel_h,
         std::size_t kernel_w, std::size_t stride, std::size_t padding) {
        const ConvSpec spec = make_spec(channels, kernel_h, kernel_w, stride, padding);
        std::vector<double> img(channels * h * w);
        col2im<double>(to_matrix(cols), spec, h, w, img);
        return to_array(img, {static_cast<py::ssize_t>(channels), static_cast<py::ssize_t>(h),
                              static_cast<py::ssize_t>(w)});
      },
      py::arg("cols"), py::arg("channels"), py::arg("h"), py::arg("w"), py::arg("kernel_h"), py::arg("kernel_w"),
      py::arg("stride") = 1, py::arg("padding") = 0);

  m.def(
      "bench_backward",
      [](const std::vector<std::tuple<std::string, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,
                                      std::size_t, std::size_t, std::size_t>>& shapes,
         const std::vector<double>& densities, std::size_t repeats, std::size_t warmup, std::size_t threads,
         std::uint64_t seed) {
        std::vector<BenchShape> s;
        for (const auto& [name, batch, ic, oc, h, w, k, st, pad] : shapes) s.push_back({name, batch, ic, oc, h, w, k, st, pad});
        std::vector<BenchRow> rows;
        {
          py::gil_scoped_release release;
          rows = bench_backward(s, densities, BenchOptions{repeats, warmup, threads, seed});
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["shape"] = r.shape;
          d["density_target"] = r.density_target;
          d["density_actual"] = r.density_actual;
          d["dense_seconds"] = r.dense_seconds;
          d["sparse_seconds"] = r.sparse_seconds;
          d["speedup"] = r.speedup;
          d["max_rel_error_di"] = r.max_rel_error_di;
          d["max_rel_error_dw"] = r.max_rel_error_dw;
          out.append(d);
        }
        return out;
      },
      py::arg("shapes"), py::arg("densities"), py::arg("repeats") = 20, py::arg("warmup") = 3,
      py::arg("threads") = 1, py::arg("seed") = 0,
      "shapes: (name, batch, in_channels, out_channels, height, width, kernel, stride, padding) tuples.");

  m.def(
      "train",
      [](const std::string& config_json, std::optional<std::filesystem::path> out_dir) {
        const RunConfig cfg = run_config_from_json(nlohmann::json::parse(config_json));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(cfg, TrainOptions{out_dir, {}});
        }
        py::list epochs;
        for (const auto& e : r.epochs) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["train_loss"] = e.train_loss;
          d["test_accuracy"] = e.test_accuracy;
          d["mean_rho_nnz"] = e.mean_rho_nnz;
          epochs.append(d);
        }
        py::dict d;
        d["final_test_accuracy"] = r.final_test_accuracy;
        d["steps"] = r.steps;
        d["epochs"] = epochs;
        return d;
      },
      py::arg("config_json"), py::arg("out_dir") = py::none(),
      "Trains from a JSON run config (same keys as the CLI config file).");
}
