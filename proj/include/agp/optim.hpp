#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "agp/layers.hpp"

namespace agp {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_every = 100;  // epochs

  void validate() const;
};

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
// Pass weight_decay = 0 for parameters that are not decayed.
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr, double momentum,
              double weight_decay);

// lr * factor^floor(epoch / decay_every)
double lr_at(std::size_t epoch, const SgdConfig& cfg);

// Momentum SGD over a fixed parameter list. Velocities start at zero and are
// keyed by position in the list.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<ParamRef<T>> params, SgdConfig cfg);

  void step(std::size_t epoch);
  const SgdConfig& config() const { return cfg_; }
  std::vector<std::vector<T>>& velocities() { return velocity_; }

 private:
  std::vector<ParamRef<T>> params_;
  SgdConfig cfg_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace agp
