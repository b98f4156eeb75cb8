#pragma once

// Small learnable image classification set: each class is a fixed random
// template plus Gaussian noise.

#include <random>

#include "agp/data.hpp"

namespace synthetic {

inline agp::Dataset make(std::size_t n, std::size_t channels, std::size_t side, std::size_t classes,
                         std::uint64_t seed, double noise = 0.5) {
  std::mt19937_64 templates_gen(1234);
  std::normal_distribution<float> unit(0.0f, 1.0f);
  std::vector<std::vector<float>> templates(classes, std::vector<float>(channels * side * side));
  for (auto& t : templates)
    for (auto& v : t) v = unit(templates_gen);

  std::mt19937_64 gen(seed);
  std::normal_distribution<float> jitter(0.0f, static_cast<float>(noise));
  agp::Dataset ds{agp::Tensor4<float>(n, channels, side, side), std::vector<int>(n), classes,
                  agp::Normalization{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % classes;
    ds.labels[i] = static_cast<int>(label);
    auto img = ds.images.image(i);
    for (std::size_t k = 0; k < img.size(); ++k) img[k] = templates[label][k] + jitter(gen);
  }
  return ds;
}

}  // namespace synthetic
