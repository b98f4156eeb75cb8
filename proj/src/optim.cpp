#include "agp/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace agp {

void SgdConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("sgd: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("sgd: weight_decay must be >= 0");
  if (!(lr_decay_factor > 0.0)) throw std::invalid_argument("sgd: lr_decay_factor must be > 0");
  if (lr_decay_every == 0) throw std::invalid_argument("sgd: lr_decay_every must be >= 1");
}

template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr, double momentum,
              double weight_decay) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw DimensionError("sgd_step: parameter, gradient and velocity lengths differ");
  }
  const T m = static_cast<T>(momentum);
  const T wd = static_cast<T>(weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = m * velocity[i] + (grads[i] + wd * params[i]);
    params[i] -= rate * velocity[i];
  }
}

double lr_at(std::size_t epoch, const SgdConfig& cfg) {
  const auto decays = static_cast<double>(epoch / cfg.lr_decay_every);
  return cfg.lr * std::pow(cfg.lr_decay_factor, decays);
}

template <typename T>
Sgd<T>::Sgd(std::vector<ParamRef<T>> params, SgdConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.value.size(), T(0));
}

template <typename T>
void Sgd<T>::step(std::size_t epoch) {
  const double lr = lr_at(epoch, cfg_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    sgd_step<T>(p.value, p.grad, velocity_[i], lr, cfg_.momentum, p.decay ? cfg_.weight_decay : 0.0);
  }
}

template void sgd_step(std::span<float>, std::span<const float>, std::span<float>, double, double, double);
template void sgd_step(std::span<double>, std::span<const double>, std::span<double>, double, double, double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace agp
