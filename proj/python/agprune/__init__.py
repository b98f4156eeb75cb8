"""Stochastic activation-gradient pruning and sparse convolution backward kernels."""

from ._agprune import (
    DimensionError,
    FormatError,
    ShapeError,
    bench_backward,
    col2im,
    compute_threshold,
    dbtd_prune,
    dense_to_csr,
    estimate_sigma,
    expected_zero_fraction,
    im2col,
    inv_norm_cdf,
    norm_cdf,
    rate_for_density,
    sdmm,
    stochastic_prune,
    train,
)

__all__ = [
    "DimensionError",
    "FormatError",
    "ShapeError",
    "bench_backward",
    "col2im",
    "compute_threshold",
    "dbtd_prune",
    "dense_to_csr",
    "estimate_sigma",
    "expected_zero_fraction",
    "im2col",
    "inv_norm_cdf",
    "norm_cdf",
    "rate_for_density",
    "sdmm",
    "stochastic_prune",
    "train",
]
