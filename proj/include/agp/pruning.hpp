#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "agp/rng.hpp"

namespace agp {

// Where the pruning hook sits relative to each convolution.
//  conv_relu:    prunes the input gradient dI produced by a conv's backward-data.
//  conv_bn_relu: prunes the output gradient dO before it enters conv backward.
enum class PlacementMode { conv_relu, conv_bn_relu };

std::string_view to_string(PlacementMode mode);
PlacementMode placement_from_string(std::string_view s);

struct PruneConfig {
  double p = 0.0;  // target pruning rate, 0 <= p < 1
  PlacementMode mode = PlacementMode::conv_bn_relu;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PruneStats {
  double sigma_hat = 0.0;
  double tau = 0.0;
  std::size_t nnz_before = 0;
  std::size_t nnz_after = 0;
  std::size_t length = 0;
  double density_after = 0.0;
};

// sigma_hat = sqrt(pi/2) * mean|g|, the unbiased half-normal scale estimate.
template <typename T>
double estimate_sigma(std::span<const T> g);

// Standard normal quantile. Acklam's rational approximation, then one Newton
// step against an erfc-based CDF. |Phi(z) - q| < 1e-8 on (0, 1).
double inv_norm_cdf(double q);

// Standard normal CDF.
double norm_cdf(double z);

// Symmetric threshold: P(|g| < tau) = p when g ~ N(0, sigma_hat^2).
double compute_threshold(double sigma_hat, double p);

// Stochastic pruning. Entries with |g| >= tau pass through. Smaller entries
// become sign(g) * tau when |g| > r * tau for a fresh uniform r, otherwise 0,
// so each output is an unbiased estimate of its input. Draw i of `rng` is used
// for element i.
template <typename T>
void stochastic_prune(std::span<const T> g, double tau, const CounterRng& rng, std::span<T> out);

template <typename T>
std::vector<T> stochastic_prune(std::span<const T> g, double tau, const CounterRng& rng);

template <typename T>
struct PruneResult {
  std::vector<T> values;
  PruneStats stats;
};

// Threshold estimation plus stochastic pruning in place.
template <typename T>
PruneStats dbtd_prune_inplace(std::span<T> g, double p, const CounterRng& rng);

template <typename T>
PruneResult<T> dbtd_prune(std::span<const T> g, const PruneConfig& cfg, const CounterRng& rng);

// Expected fraction of exact zeros produced by dbtd_prune on N(0, 1) input
// with an exact sigma. Closed form of 2 * int_0^tau phi(x) (tau - x) / tau dx.
double expected_zero_fraction(double p);

// Inverse of 1 - expected_zero_fraction, by bisection. Used to hit a target
// density with synthetic Gaussian gradients. Targets below
// min_pruned_density() return the largest representable rate.
double rate_for_density(double target_density);

// Expected density at the largest rate below 1 whose threshold is finite in
// double precision (about 0.1). Lower densities are out of reach of DBTD.
double min_pruned_density();

}  // namespace agp
