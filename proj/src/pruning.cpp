#include "agp/pruning.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace agp {

std::string_view to_string(PlacementMode mode) {
  return mode == PlacementMode::conv_relu ? "conv_relu" : "conv_bn_relu";
}

PlacementMode placement_from_string(std::string_view s) {
  if (s == "conv_relu") return PlacementMode::conv_relu;
  if (s == "conv_bn_relu") return PlacementMode::conv_bn_relu;
  throw std::invalid_argument("unknown placement mode '" + std::string(s) + "'");
}

void PruneConfig::validate() const {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("pruning rate p must be in [0, 1), got " + std::to_string(p));
}

template <typename T>
double estimate_sigma(std::span<const T> g) {
  if (g.empty()) throw std::invalid_argument("estimate_sigma: empty gradient");
  double sum = 0.0;
  for (const T v : g) sum += std::abs(static_cast<double>(v));
  return std::sqrt(std::numbers::pi / 2.0) * sum / static_cast<double>(g.size());
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double inv_norm_cdf(double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("inv_norm_cdf: q must be in (0, 1), got " + std::to_string(q));
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double kLow = 0.02425;

  double x;
  if (q < kLow) {
    const double t = std::sqrt(-2.0 * std::log(q));
    x = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  } else if (q <= 1.0 - kLow) {
    const double u = q - 0.5;
    const double r = u * u;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double t = std::sqrt(-2.0 * std::log1p(-q));
    x = -(((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  }
  if (q == 0.5) return 0.0;

  // Newton step on Phi(x) - q. For upper-tail q the residual is formed from
  // the survival function to avoid cancellation near 1.
  const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double residual = q > 0.5 ? (1.0 - q) - 0.5 * std::erfc(x / std::numbers::sqrt2)
                                  : norm_cdf(x) - q;
  return x - residual / density;
}

double compute_threshold(double sigma_hat, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("compute_threshold: p must be in [0, 1), got " + std::to_string(p));
  if (!(sigma_hat >= 0.0)) throw std::invalid_argument("compute_threshold: sigma_hat must be >= 0");
  if (p == 0.0 || sigma_hat == 0.0) return 0.0;
  return inv_norm_cdf((1.0 + p) / 2.0) * sigma_hat;
}

template <typename T>
void stochastic_prune(std::span<const T> g, double tau, const CounterRng& rng, std::span<T> out) {
  if (out.size() != g.size()) throw std::invalid_argument("stochastic_prune: output length mismatch");
  if (!(tau >= 0.0)) throw std::invalid_argument("stochastic_prune: tau must be >= 0");
  const T snapped = static_cast<T>(tau);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T v = g[i];
    const double mag = std::abs(static_cast<double>(v));
    if (mag >= tau) {
      out[i] = v;
      continue;
    }
    const double r = rng.uniform(i);
    if (mag > r * tau) {
      out[i] = v > T(0) ? snapped : -snapped;
    } else {
      out[i] = T(0);
    }
  }
}

template <typename T>
std::vector<T> stochastic_prune(std::span<const T> g, double tau, const CounterRng& rng) {
  std::vector<T> out(g.size());
  stochastic_prune<T>(g, tau, rng, out);
  return out;
}

template <typename T>
PruneStats dbtd_prune_inplace(std::span<T> g, double p, const CounterRng& rng) {
  if (g.empty()) throw std::invalid_argument("dbtd_prune: empty gradient");
  PruneStats stats;
  stats.length = g.size();
  for (const T v : g) stats.nnz_before += v != T(0);
  stats.sigma_hat = estimate_sigma<T>(g);
  stats.tau = compute_threshold(stats.sigma_hat, p);
  if (stats.tau > 0.0) stochastic_prune<T>(std::span<const T>(g), stats.tau, rng, g);
  for (const T v : g) stats.nnz_after += v != T(0);
  stats.density_after = static_cast<double>(stats.nnz_after) / static_cast<double>(stats.length);
  return stats;
}

template <typename T>
PruneResult<T> dbtd_prune(std::span<const T> g, const PruneConfig& cfg, const CounterRng& rng) {
  cfg.validate();
  PruneResult<T> result{std::vector<T>(g.begin(), g.end()), {}};
  result.stats = dbtd_prune_inplace<T>(result.values, cfg.p, rng);
  return result;
}

double expected_zero_fraction(double p) {
  if (p <= 0.0) return 0.0;
  const double tau = compute_threshold(1.0, p);
  const double phi0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double phi_tau = phi0 * std::exp(-0.5 * tau * tau);
  return p - 2.0 * (phi0 - phi_tau) / tau;
}

namespace {
constexpr double kMaxRate = 1.0 - 1e-15;
}

double min_pruned_density() { return 1.0 - expected_zero_fraction(kMaxRate); }

double rate_for_density(double target_density) {
  if (!(target_density > 0.0 && target_density <= 1.0)) {
    throw std::invalid_argument("rate_for_density: target must be in (0, 1]");
  }
  if (target_density >= 1.0) return 0.0;
  double lo = 0.0;
  double hi = kMaxRate;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (1.0 - expected_zero_fraction(mid) > target_density) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

#define AGP_INSTANTIATE(T)                                                                        \
  template double estimate_sigma(std::span<const T>);                                             \
  template void stochastic_prune(std::span<const T>, double, const CounterRng&, std::span<T>);    \
  template std::vector<T> stochastic_prune(std::span<const T>, double, const CounterRng&);        \
  template PruneStats dbtd_prune_inplace(std::span<T>, double, const CounterRng&);                \
  template PruneResult<T> dbtd_prune(std::span<const T>, const PruneConfig&, const CounterRng&);

AGP_INSTANTIATE(float)
AGP_INSTANTIATE(double)
#undef AGP_INSTANTIATE

}  // namespace agp
