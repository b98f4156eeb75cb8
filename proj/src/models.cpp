#include "agp/models.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace agp {

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::alexnet_toy ? "alexnet_toy" : "resnet_toy";
}

ModelKind model_from_string(std::string_view s) {
  if (s == "alexnet_toy") return ModelKind::alexnet_toy;
  if (s == "resnet_toy") return ModelKind::resnet_toy;
  throw std::invalid_argument("unknown model '" + std::string(s) + "'");
}

PlacementMode placement_for(ModelKind kind) {
  return kind == ModelKind::alexnet_toy ? PlacementMode::conv_relu : PlacementMode::conv_bn_relu;
}

namespace {

template <typename T>
class Builder {
 public:
  Builder(PruneConfig prune, std::uint64_t seed, std::vector<Conv2d<T>*>& convs,
          std::vector<PruneLayer<T>*>& prunes)
      : prune_(prune), rng_(seed), convs_(convs), prunes_(prunes) {}

  Conv2d<T>& conv(Sequential<T>& seq, const std::string& name, ConvSpec spec, bool bias) {
    auto& layer = seq.template add<Conv2d<T>>(name, spec, bias);
    he_init(layer.weights().data(), spec.patch_size());
    convs_.push_back(&layer);
    return layer;
  }

  PruneLayer<T>& prune(Sequential<T>& seq, const std::string& conv_name) {
    auto& layer = seq.template add<PruneLayer<T>>(conv_name + ".prune", prune_, next_id_++);
    prunes_.push_back(&layer);
    return layer;
  }

  Linear<T>& linear(Sequential<T>& seq, const std::string& name, std::size_t in, std::size_t out) {
    auto& layer = seq.template add<Linear<T>>(name, in, out);
    he_init(layer.weights().data(), in);
    return layer;
  }

  // conv -> prune -> bn [-> relu]
  Conv2d<T>& conv_bn(Sequential<T>& seq, const std::string& name, ConvSpec spec, bool relu) {
    auto& layer = conv(seq, name, spec, false);
    prune(seq, name);
    seq.template add<BatchNorm2d<T>>(name + ".bn", spec.out_channels);
    if (relu) seq.template add<ReLU<T>>(name + ".relu");
    return layer;
  }

 private:
  void he_init(std::span<T> w, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (T& v : w) v = static_cast<T>(dist(rng_));
  }

  PruneConfig prune_;
  std::mt19937_64 rng_;
  std::uint64_t next_id_ = 0;
  std::vector<Conv2d<T>*>& convs_;
  std::vector<PruneLayer<T>*>& prunes_;
};

ConvSpec conv3x3(std::size_t in, std::size_t out, std::size_t pad) { return ConvSpec{in, out, 3, 3, 1, pad}; }

template <typename T>
void build_alexnet(Sequential<T>& net, Builder<T>& b, const InputSpec& in) {
  const std::size_t widths[] = {32, 64, 64};
  const std::size_t pads[] = {2, 2, 1};
  std::size_t c = in.channels;
  std::size_t h = in.height;
  std::size_t w = in.width;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = "conv" + std::to_string(i + 1);
    if (i > 0) b.prune(net, name);
    const ConvSpec spec = conv3x3(c, widths[i], pads[i]);
    auto& layer = b.conv(net, name, spec, true);
    if (i == 0) layer.set_input_grad(false);
    net.template add<ReLU<T>>(name + ".relu");
    net.template add<MaxPool2d<T>>(name + ".pool", 2, 2);
    h = (spec.out_h(h) - 2) / 2 + 1;
    w = (spec.out_w(w) - 2) / 2 + 1;
    c = widths[i];
  }
  b.linear(net, "fc1", c * h * w, 128);
  net.template add<ReLU<T>>("fc1.relu");
  b.linear(net, "fc2", 128, in.classes);
}

template <typename T>
void build_resnet(Sequential<T>& net, Builder<T>& b, const InputSpec& in) {
  b.conv_bn(net, "stem", conv3x3(in.channels, 16, 1), true).set_input_grad(false);
  const std::size_t widths[] = {16, 32, 64, 128};
  std::size_t c = 16;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string name = "block" + std::to_string(i + 1);
    if (i > 0) net.template add<AvgPool2d<T>>(name + ".pool", 2, 2);
    auto& block = net.template add<ResidualBlock<T>>(name);
    b.conv_bn(block.main(), name + ".conv1", conv3x3(c, widths[i], 1), true);
    b.conv_bn(block.main(), name + ".conv2", conv3x3(widths[i], widths[i], 1), false);
    if (c != widths[i]) b.conv_bn(block.shortcut(), name + ".proj", ConvSpec{c, widths[i], 1, 1, 1, 0}, false);
    c = widths[i];
  }
  net.template add<AvgPool2d<T>>("gap", 0, 0);
  b.linear(net, "fc", c, in.classes);
}

}  // namespace

template <typename T>
Model<T>::Model(ModelKind kind, InputSpec input, PruneConfig prune, std::uint64_t init_seed)
    : kind_(kind), input_(input), net_(std::string(to_string(kind))) {
  prune.mode = placement_for(kind);
  Builder<T> b(prune, init_seed, convs_, prunes_);
  if (kind == ModelKind::alexnet_toy) {
    build_alexnet(net_, b, input_);
  } else {
    build_resnet(net_, b, input_);
  }
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::params() {
  std::vector<ParamRef<T>> out;
  net_.collect_params(out);
  return out;
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::buffers() {
  std::vector<ParamRef<T>> out;
  net_.collect_buffers(out);
  return out;
}

template <typename T>
void Model<T>::set_backward_path(BackwardPath path) {
  for (auto* c : convs_) c->set_backward_path(path);
}

template <typename T>
void Model<T>::set_prune_rate(double p) {
  for (auto* l : prunes_) l->set_rate(p);
}

template <typename T>
double Model<T>::grad_density() const {
  std::size_t nnz = 0;
  std::size_t total = 0;
  for (const auto* c : convs_) {
    nnz += c->last_grad_nnz();
    total += c->last_grad_size();
  }
  return total == 0 ? 0.0 : static_cast<double>(nnz) / static_cast<double>(total);
}

template <typename T>
StageTimes Model<T>::take_stage_times() {
  StageTimes sum;
  for (auto* c : convs_) {
    sum.agbp_seconds += c->times().agbp_seconds;
    sum.wgc_seconds += c->times().wgc_seconds;
    c->times() = StageTimes{};
  }
  return sum;
}

template class Model<float>;
template class Model<double>;

}  // namespace agp
