#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agp/im2col.hpp"
#include "agp/pruning.hpp"
#include "agp/sparse.hpp"
#include "agp/tensor.hpp"

namespace agp {

enum class Mode { train, eval };

// Which kernels the convolution backward pass runs.
//  sparse: im2col_trans / sdmm / col2im_trans on CSR gradients.
//  dense:  plain matmul with col2im, the reference the sparse path must match.
enum class BackwardPath { sparse, dense };

template <typename T>
struct ParamRef {
  std::string name;
  std::span<T> value;
  std::span<T> grad;
  bool decay = false;  // weight decay applies (conv / FC weights only)
};

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  virtual Tensor4<T> forward(const Tensor4<T>& x, Mode mode) = 0;
  virtual Tensor4<T> backward(const Tensor4<T>& dy) = 0;
  virtual void collect_params(std::vector<ParamRef<T>>&) {}
  // Named state that is not trained by SGD but must be checkpointed.
  virtual void collect_buffers(std::vector<ParamRef<T>>&) {}
  // Depth-first over this layer and any children.
  virtual void visit(const std::function<void(Layer<T>&)>& fn) { fn(*this); }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

struct StageTimes {
  double agbp_seconds = 0.0;
  double wgc_seconds = 0.0;
};

// ---- Convolution -----------------------------------------------------------

// Free-function forms of the two backward stages, shared by the layer and the
// benchmark. `weights` is the (out_channels, in_channels*kh*kw) flattening.
// `d_o` holds the whole batch; `input_shape` is the forward input shape.
template <typename T>
Tensor4<T> conv_backward_data_sparse(const Matrix<T>& weights, const ConvSpec& spec, const Tensor4<T>& d_o,
                                     const Shape4& input_shape);
template <typename T>
Tensor4<T> conv_backward_data_dense(const Matrix<T>& weights, const ConvSpec& spec, const Tensor4<T>& d_o,
                                    const Shape4& input_shape);
// Returns dW as (out_channels, in_channels*kh*kw), summed over the batch in
// image order.
template <typename T>
Matrix<T> conv_backward_weights_sparse(const ConvSpec& spec, const Tensor4<T>& input, const Tensor4<T>& d_o);
template <typename T>
Matrix<T> conv_backward_weights_dense(const ConvSpec& spec, const Tensor4<T>& input, const Tensor4<T>& d_o);

template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string name, ConvSpec spec, bool with_bias = true);

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  // Weight gradients first, then (if enabled) input gradients.
  Tensor4<T> backward(const Tensor4<T>& d_o) override;
  void collect_params(std::vector<ParamRef<T>>& out) override;

  Tensor4<T> backward_data(const Tensor4<T>& d_o);
  // Overwrites weight_grad() / bias_grad().
  void backward_weights(const Tensor4<T>& d_o);

  const ConvSpec& spec() const { return spec_; }
  Matrix<T>& weights() { return weights_; }
  const Matrix<T>& weights() const { return weights_; }
  std::vector<T>& bias() { return bias_; }
  const Matrix<T>& weight_grad() const { return weight_grad_; }
  const std::vector<T>& bias_grad() const { return bias_grad_; }
  bool has_bias() const { return with_bias_; }

  // The first convolution of a network has no consumer for dI.
  void set_input_grad(bool enabled) { input_grad_ = enabled; }
  bool input_grad() const { return input_grad_; }
  void set_backward_path(BackwardPath path) { path_ = path; }
  BackwardPath backward_path() const { return path_; }

  // Density bookkeeping of the most recent dO seen by backward.
  std::size_t last_grad_nnz() const { return last_nnz_; }
  std::size_t last_grad_size() const { return last_size_; }
  StageTimes& times() { return times_; }

 private:
  ConvSpec spec_;
  bool with_bias_;
  bool input_grad_ = true;
  BackwardPath path_ = BackwardPath::sparse;
  Matrix<T> weights_;
  std::vector<T> bias_;
  Matrix<T> weight_grad_;
  std::vector<T> bias_grad_;
  std::optional<Tensor4<T>> cached_input_;
  std::size_t last_nnz_ = 0;
  std::size_t last_size_ = 0;
  StageTimes times_;
};

// ---- Pruning (straight-through) --------------------------------------------

// Forward is the identity. Backward replaces dO with its DBTD + stochastic
// pruning. The RNG stream is keyed by (seed, layer id, backward call count).
template <typename T>
class PruneLayer : public Layer<T> {
 public:
  PruneLayer(std::string name, PruneConfig cfg, std::uint64_t layer_id);

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  Tensor4<T> backward(const Tensor4<T>& d_o) override;

  const PruneConfig& config() const { return cfg_; }
  void set_rate(double p);
  const PruneStats& last_stats() const { return last_stats_; }
  std::uint64_t layer_id() const { return layer_id_; }
  std::uint64_t calls() const { return calls_; }
  void set_calls(std::uint64_t calls) { calls_ = calls; }

  // When enabled, the next backward keeps copies of its input and output.
  void set_capture(bool enabled) { capture_ = enabled; }
  const std::vector<T>& captured_before() const { return before_; }
  const std::vector<T>& captured_after() const { return after_; }

 private:
  PruneConfig cfg_;
  std::uint64_t layer_id_;
  std::uint64_t calls_ = 0;
  PruneStats last_stats_;
  bool capture_ = false;
  std::vector<T> before_;
  std::vector<T> after_;
};

// ---- Pointwise / normalization ---------------------------------------------

template <typename T>
class ReLU : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  Tensor4<T> backward(const Tensor4<T>& dy) override;

 private:
  std::vector<std::uint8_t> mask_;
  std::optional<Shape4> shape_;
};

template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  BatchNorm2d(std::string name, std::size_t channels, double eps = 1e-5, double momentum = 0.1);

  // Training mode normalizes with biased in-batch statistics and needs n >= 2.
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  Tensor4<T> backward(const Tensor4<T>& dy) override;
  void collect_params(std::vector<ParamRef<T>>& out) override;
  void collect_buffers(std::vector<ParamRef<T>>& out) override;

  std::vector<T>& gamma() { return gamma_; }
  std::vector<T>& beta() { return beta_; }
  const std::vector<T>& gamma_grad() const { return gamma_grad_; }
  const std::vector<T>& beta_grad() const { return beta_grad_; }
  const std::vector<T>& running_mean() const { return running_mean_; }
  const std::vector<T>& running_var() const { return running_var_; }

 private:
  std::size_t channels_;
  double eps_;
  double momentum_;
  std::vector<T> gamma_, beta_, gamma_grad_, beta_grad_;
  std::vector<T> running_mean_, running_var_;
  std::optional<Tensor4<T>> xhat_;
  std::vector<T> inv_std_;
};

// ---- Fully connected / pooling ---------------------------------------------

// Flattens (n, c, h, w) input to (n, c*h*w); output is (n, out_features, 1, 1).
template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features);

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  Tensor4<T> backward(const Tensor4<T>& dy) override;
  void collect_params(std::vector<ParamRef<T>>& out) override;

  Matrix<T>& weights() { return weights_; }
  std::vector<T>& bias() { return bias_; }
  const Matrix<T>& weight_grad() const { return weight_grad_; }
  const std::vector<T>& bias_grad() const { return bias_grad_; }

 private:
  std::size_t in_features_;
  std::size_t out_features_;
  Matrix<T> weights_;  // (out, in)
  std::vector<T> bias_;
  Matrix<T> weight_grad_;
  std::vector<T> bias_grad_;
  std::optional<Tensor4<T>> cached_input_;
};

// Output extent floor((h - kernel) / stride) + 1.
template <typename T>
class MaxPool2d : public Layer<T> {
 public:
  MaxPool2d(std::string name, std::size_t kernel, std::size_t stride);
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  Tensor4<T> backward(const Tensor4<T>& dy) override;

 private:
  std::size_t kernel_, stride_;
  std::vector<std::size_t> argmax_;
  std::optional<Shape4> in_shape_;
};

// kernel == 0 pools the whole spatial extent (global average).
template <typename T>
class AvgPool2d : public Layer<T> {
 public:
  AvgPool2d(std::string name, std::size_t kernel, std::size_t stride);
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  Tensor4<T> backward(const Tensor4<T>& dy) override;

 private:
  std::size_t kernel_, stride_;
  std::size_t kh_ = 0, kw_ = 0, sh_ = 0, sw_ = 0;
  std::optional<Shape4> in_shape_;
};

// ---- Containers ------------------------------------------------------------

template <typename T>
class Sequential : public Layer<T> {
 public:
  explicit Sequential(std::string name) : Layer<T>(std::move(name)) {}

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  Tensor4<T> backward(const Tensor4<T>& dy) override;
  void collect_params(std::vector<ParamRef<T>>& out) override;
  void collect_buffers(std::vector<ParamRef<T>>& out) override;
  void visit(const std::function<void(Layer<T>&)>& fn) override;

  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// relu(main(x) + shortcut(x)); an empty shortcut is the identity.
template <typename T>
class ResidualBlock : public Layer<T> {
 public:
  explicit ResidualBlock(std::string name);

  Sequential<T>& main() { return main_; }
  Sequential<T>& shortcut() { return shortcut_; }

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override;
  Tensor4<T> backward(const Tensor4<T>& dy) override;
  void collect_params(std::vector<ParamRef<T>>& out) override;
  void collect_buffers(std::vector<ParamRef<T>>& out) override;
  void visit(const std::function<void(Layer<T>&)>& fn) override;

 private:
  Sequential<T> main_;
  Sequential<T> shortcut_;
  ReLU<T> relu_;
};

// ---- Loss ------------------------------------------------------------------

template <typename T>
struct XentResult {
  double loss = 0.0;      // mean over the batch
  Tensor4<T> dlogits;     // gradient of the mean loss
  std::size_t correct = 0;
};

// logits: (n, classes, 1, 1). Labels must lie in [0, classes).
template <typename T>
XentResult<T> softmax_xent(const Tensor4<T>& logits, std::span<const int> labels);

// Predicted class per row (first maximum).
template <typename T>
std::vector<int> argmax_rows(const Tensor4<T>& logits);

}  // namespace agp
