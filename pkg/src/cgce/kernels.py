"""Product-kernel Nadaraya-Watson regression with higher-order kernels.

The one-dimensional kernel is dimension-indexed: the plain Gaussian for
d = 1, and Gaussian-based higher-order polynomials for d = 4 and d = 9 whose
low-order moments vanish.  Other dimensions fall back to the Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySubgroup, ZeroVarianceCovariate

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def kernel_function(d: int, x) -> np.ndarray:
    """Evaluate the d-indexed one-dimensional kernel at x (vectorized)."""
    x = np.asarray(x, dtype=float)
    phi = np.exp(-0.5 * x**2) / _SQRT_2PI
    x2 = x**2
    if d == 4:
        return (15.0 - 10.0 * x2 + x2**2) * phi / 8.0
    if d == 9:
        x4 = x2**2
        return (945.0 - 1260.0 * x2 + 378.0 * x4 - 36.0 * x2 * x4 + x4**2) * phi / 384.0
    return phi


def default_bandwidth(d: int, m: int, sigma_hat) -> np.ndarray:
    """h_j = 1.5 sqrt(d) m^(-1/(2d+1)) sigma_j."""
    sigma_hat = np.atleast_1d(np.asarray(sigma_hat, dtype=float))
    if m < 2:
        raise EmptySubgroup("bandwidth")
    if np.any(sigma_hat <= 0.0):
        raise ZeroVarianceCovariate("covariate standard deviation must be positive")
    return 1.5 * np.sqrt(d) * m ** (-1.0 / (2 * d + 1)) * sigma_hat


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family selector (by dimension), per-dimension bandwidths, guard."""

    d: int
    h: np.ndarray
    eta: float = 1e-8


def product_kernel_matrix(train_x: np.ndarray, query_x: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """(n_query, n_train) matrix of product-kernel weights.

    Computed in query chunks to bound the (chunk, n_train, d) intermediate.
    """
    h = np.atleast_1d(spec.h)
    nq, nt = query_x.shape[0], train_x.shape[0]
    out = np.empty((nq, nt))
    chunk = max(1, int(2e7 // max(1, nt * train_x.shape[1])))
    for lo in range(0, nq, chunk):
        hi = min(lo + chunk, nq)
        diff = (query_x[lo:hi, None, :] - train_x[None, :, :]) / h
        out[lo:hi] = kernel_function(spec.d, diff).prod(axis=2)
    return out


def kernel_regress(train_x, train_r, subgroup_mask, query_x, spec: KernelSpec):
    """Nadaraya-Watson estimate at each query point.

    Queries whose weight-sum magnitude falls below ``spec.eta`` get the
    subgroup's plain mean instead of the ill-conditioned ratio.
    """
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    if train_x.shape[0] == 1 and np.asarray(train_r).size > 1:
        train_x = train_x.T
    train_r = np.asarray(train_r, dtype=float)
    mask = np.asarray(subgroup_mask, dtype=bool)
    if not mask.any():
        raise EmptySubgroup("kernel_regress")
    scalar_query = np.asarray(query_x).ndim <= 1 and np.asarray(query_x).size == train_x.shape[1]
    qx = np.atleast_2d(np.asarray(query_x, dtype=float))
    if qx.shape[1] != train_x.shape[1]:
        qx = qx.reshape(-1, train_x.shape[1])
    k = product_kernel_matrix(train_x[mask], qx, spec)
    denom = k.sum(axis=1)
    fallback = np.abs(denom) < spec.eta
    denom = np.where(fallback, 1.0, denom)
    out = k @ train_r[mask] / denom
    out = np.where(fallback, train_r[mask].mean(), out)
    return float(out[0]) if scalar_query else out
