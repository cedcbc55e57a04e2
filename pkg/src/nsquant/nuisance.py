"""Local long-run variance, conditional density and bootstrap weight estimates.

Both estimators work on the local window N(t) = {i : s(t) <= i <= l(t)} with
s(t) = max(floor(nt - nb), 1) and l(t) = min(floor(nt + nb), n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nsquant.curves import EvalGrid, SeriesSample, _as_sample, local_fit
from nsquant.errors import WindowTooSmallError
from nsquant.kernels import Kernel, epanechnikov
from nsquant.quantreg import check_level, score

FLOOR = 1e-8


@dataclass(frozen=True)
class NuisanceEstimates:
    grid: EvalGrid
    sigma2: np.ndarray
    density: np.ndarray
    pi_hat: np.ndarray
    m_n: int
    h_n: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma2)


def window_bounds(n: int, points, bandwidth: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-based inclusive index bounds (s, l) of N(t) for each point."""
    pts = np.asarray(points, dtype=float)
    # small guard so that n*t computed in floating point does not drop below an integer
    s = np.maximum(np.floor(n * pts - n * bandwidth + 1e-9), 1).astype(np.intp)
    l = np.minimum(np.floor(n * pts + n * bandwidth + 1e-9), n).astype(np.intp)
    return s - 1, l - 1


def block_length(n: int, bandwidth: float, window_size: int | None = None) -> int:
    """floor((2 n b)^(1/3)) clamped to [2, |N|/2]."""
    m = math.floor((2 * n * bandwidth) ** (1 / 3) + 1e-12)
    upper = (window_size if window_size is not None else 2 * n * bandwidth) / 2
    return int(max(2, min(m, math.floor(upper))))


def subsampling_variance(z: np.ndarray, block: int) -> float:
    """m/(N-m+1) * sum_j (mean of z[j:j+m] - mean(z))^2 over all full blocks."""
    z = np.asarray(z, dtype=float)
    size = z.size
    if size < block:
        raise WindowTooSmallError(f"window of {size} points is smaller than block length {block}")
    csum = np.concatenate([[0.0], np.cumsum(z)])
    means = (csum[block:] - csum[:-block]) / block
    return float(block / (size - block + 1) * np.sum((means - z.mean()) ** 2))


def long_run_variance(sample, level: float, fitted, points, window_bandwidth: float,
                      block: int | None = None) -> np.ndarray:
    """Subsampling estimate of sigma^2(t) from Z_i = psi(X_i - Q(i/n)).

    ``fitted`` holds the quantile estimate at every design point i/n. The
    block length defaults to :func:`block_length`. No positivity floor is
    applied here.
    """
    sample = _as_sample(sample)
    level = check_level(level)
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape != (sample.n,):
        raise ValueError("fitted must give the quantile estimate at each of the n design points")
    z = score(level, sample.values - fitted)
    lo, hi = window_bounds(sample.n, points, window_bandwidth)
    if block is None:
        block = block_length(sample.n, window_bandwidth, int((hi - lo + 1).min()))
    if block < 1:
        raise ValueError("block length must be positive")
    return np.array([subsampling_variance(z[a:b + 1], block) for a, b in zip(lo, hi)])


def density_bandwidth(window_values: np.ndarray, fallback_sd: float = 1.0) -> float:
    """Normal-reference rule 1.06 * sd * |N|^(-1/5)."""
    sd = float(np.std(window_values, ddof=1)) if window_values.size > 1 else 0.0
    if not sd > 0:
        sd = fallback_sd
    return 1.06 * sd * window_values.size ** (-0.2)


def conditional_density(sample, curve_values, points, window_bandwidth: float,
                        density_bandwidth_value: float | None = None,
                        density_kernel: Kernel | None = None,
                        return_bandwidths: bool = False):
    """Kernel density of the window observations evaluated at Q(t).

    ``curve_values`` are the quantile estimates at ``points``. Without an
    explicit bandwidth, each window uses :func:`density_bandwidth`.
    """
    sample = _as_sample(sample)
    kernel = density_kernel or epanechnikov()
    qv = np.asarray(curve_values, dtype=float)
    lo, hi = window_bounds(sample.n, points, window_bandwidth)
    x = sample.values
    global_sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    fallback = global_sd if global_sd > 0 else 1.0
    dens = np.empty(qv.size)
    hs = np.empty(qv.size)
    for j, (a, b) in enumerate(zip(lo, hi)):
        win = x[a:b + 1]
        if win.size == 0:
            raise WindowTooSmallError(f"empty window at t={points[j]:.6g}")
        h = density_bandwidth_value if density_bandwidth_value is not None else \
            density_bandwidth(win, fallback)
        if not h > 0:
            raise ValueError("density bandwidth must be positive")
        dens[j] = float(np.sum(kernel.evaluate((qv[j] - win) / h))) / (win.size * h)
        hs[j] = h
    return (dens, hs) if return_bandwidths else dens


def floors(sample: SeriesSample) -> tuple[float, float]:
    """Positivity floors (for sigma^2, for f) scaled to the data."""
    x = sample.values
    var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
    rng = float(np.ptp(x))
    return FLOOR * (var if var > 0 else 1.0), FLOOR / (rng if rng > 0 else 1.0)


def assemble(sample: SeriesSample, grid: EvalGrid, sigma2_raw, density_raw, m_n: int,
             h_n) -> NuisanceEstimates:
    s_floor, f_floor = floors(sample)
    sigma2 = np.maximum(np.asarray(sigma2_raw, dtype=float), s_floor)
    dens = np.maximum(np.asarray(density_raw, dtype=float), f_floor)
    return NuisanceEstimates(grid, sigma2, dens, dens ** 2 / sigma2, int(m_n), np.asarray(h_n))


def estimate_nuisance(sample, level: float, bandwidth: float, grid: EvalGrid,
                      kernel: Kernel | None = None, fitted_obs=None,
                      curve_values=None) -> NuisanceEstimates:
    """sigma^2(t), f(t, Q(t)) and pi(t) = f^2 / sigma^2 on ``grid``.

    The local linear fit at ``bandwidth`` supplies both the residual scores
    (at every design point) and the density evaluation point (on the grid);
    either can be passed in to avoid refitting.
    """
    sample = _as_sample(sample)
    if fitted_obs is None or curve_values is None:
        centers = np.concatenate([sample.times, grid.points])
        q, _ = local_fit(sample, level, bandwidth, centers, kernel)
        fitted_obs, curve_values = q[:sample.n], q[sample.n:]
    lo, hi = window_bounds(sample.n, grid.points, bandwidth)
    m_n = block_length(sample.n, bandwidth, int((hi - lo + 1).min()))
    sigma2 = long_run_variance(sample, level, fitted_obs, grid.points, bandwidth, m_n)
    dens, hs = conditional_density(sample, curve_values, grid.points, bandwidth,
                                   return_bandwidths=True)
    return assemble(sample, grid, sigma2, dens, m_n, hs)
