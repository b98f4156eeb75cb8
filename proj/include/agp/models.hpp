#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "agp/layers.hpp"

namespace agp {

enum class ModelKind { alexnet_toy, resnet_toy };

std::string_view to_string(ModelKind kind);
ModelKind model_from_string(std::string_view s);
// Conv-ReLU chains for alexnet_toy, Conv-BN-ReLU blocks for resnet_toy.
PlacementMode placement_for(ModelKind kind);

struct InputSpec {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 10;
};

// A network plus the bookkeeping the trainer needs: the conv layers whose
// backward runs on sparse gradients and the pruning sites feeding them.
//
// alexnet_toy: three 3x3 Conv-ReLU-MaxPool stages (32, 64, 64 channels; the
//   first two padded by 2) and two FC layers. A pruning site sits in front of
//   every conv but the first, so the pruned tensor is that conv's dI.
// resnet_toy: 3x3 stem plus four basic residual blocks (16, 32, 64, 128
//   channels, 2x2 average pooling before blocks 2-4), global average pooling
//   and one FC layer. Every conv is followed by a pruning site and BN, so the
//   pruned tensor is the conv's dO.
template <typename T>
class Model {
 public:
  Model(ModelKind kind, InputSpec input, PruneConfig prune, std::uint64_t init_seed);

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) { return net_.forward(x, mode); }
  Tensor4<T> backward(const Tensor4<T>& dlogits) { return net_.backward(dlogits); }

  std::vector<ParamRef<T>> params();
  std::vector<ParamRef<T>> buffers();
  const std::vector<Conv2d<T>*>& convs() const { return convs_; }
  const std::vector<PruneLayer<T>*>& prune_layers() const { return prunes_; }
  Sequential<T>& net() { return net_; }

  ModelKind kind() const { return kind_; }
  const InputSpec& input() const { return input_; }

  void set_backward_path(BackwardPath path);
  void set_prune_rate(double p);
  // Non-zeros over elements of every conv's most recent dO.
  double grad_density() const;
  // Sum of conv backward stage times since the last call; resets them.
  StageTimes take_stage_times();

 private:
  ModelKind kind_;
  InputSpec input_;
  Sequential<T> net_;
  std::vector<Conv2d<T>*> convs_;
  std::vector<PruneLayer<T>*> prunes_;
};

}  // namespace agp
