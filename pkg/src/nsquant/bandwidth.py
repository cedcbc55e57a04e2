"""Quantile-specific bandwidth selection with a serial-dependence correction.

The pipeline is

    b_ind  -- plug-in bandwidth computed as if observations were independent
    rho*   -- (long-run variance of the quantile scores / alpha(1-alpha))^(1/5)
    b*     =  rho* b_ind
    b_jack =  2 b*                 (SCB test, jackknife estimate)
    b_isdt =  b_jack n^(-1/45)     (integrated squared difference test)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.stats import norm

from nsquant.curves import _as_sample, local_fit
from nsquant.kernels import SQRT2, Kernel, constants, epanechnikov
from nsquant.nuisance import subsampling_variance
from nsquant.quantreg import check_level, score

B_MAX = 0.45
# jackknife fits also smooth at sqrt(2) b, which must obey the same bound
B_JACK_MAX = B_MAX / SQRT2
MIN_N = 50


def clamp(b: float, n: int, upper: float = B_MAX) -> float:
    return float(min(max(b, 5.0 / n), upper))


@dataclass(frozen=True)
class BandwidthPlan:
    b_ind: float
    rho_star_hat: float
    b_star: float
    b_jack: float
    b_isdt: float
    m_tilde: int


def yu_jones_factor(level: float) -> float:
    """{alpha(1-alpha) / phi(Phi^-1(alpha))^2}^(1/5), equal to ~1.0945 at the median."""
    level = check_level(level)
    dens = norm.pdf(norm.ppf(level))
    return (level * (1 - level) / dens ** 2) ** 0.2


def mean_regression_bandwidth(sample, kernel: Kernel | None = None) -> float:
    """Normal-reference plug-in AMISE bandwidth for a local linear mean fit.

    Curvature and residual variance come from a global least-squares quartic.
    Returns ``inf`` when the fitted curvature vanishes.
    """
    sample = _as_sample(sample)
    kc = constants(kernel or epanechnikov())
    t, x, n = sample.times, sample.values, sample.n
    poly = Polynomial.fit(t, x, 4, domain=[0, 1], window=[0, 1])
    resid = x - poly(t)
    s2 = float(resid @ resid) / (n - 5)
    curv = (poly.deriv(2) ** 2).integ()
    theta22 = float(curv(1.0) - curv(0.0))
    if not theta22 > 0:
        return math.inf
    return n ** -0.2 * (s2 * kc.phi / (kc.mu2 ** 2 * theta22)) ** 0.2


def independence_bandwidth(sample, level: float, kernel: Kernel | None = None) -> float:
    sample = _as_sample(sample)
    if sample.n < MIN_N:
        raise ValueError(f"bandwidth selection needs n >= {MIN_N}, got {sample.n}")
    b = mean_regression_bandwidth(sample, kernel) * yu_jones_factor(level)
    return clamp(b, sample.n)


def correction_from_scores(scores: np.ndarray, level: float) -> float:
    """rho*-hat from residual scores, blocks of floor(n^(1/3)); no clamping."""
    n = len(scores)
    m = math.floor(n ** (1 / 3) + 1e-12)
    s2 = subsampling_variance(scores, m)
    return (s2 / (level * (1 - level))) ** 0.2


def correction_factor(sample, level: float, b_ind: float, kernel: Kernel | None = None) -> float:
    sample = _as_sample(sample)
    level = check_level(level)
    m = math.floor(sample.n ** (1 / 3) + 1e-12)
    if sample.n < m + 1:
        raise ValueError("series too short for the correction factor")
    fitted, _ = local_fit(sample, level, b_ind, sample.times, kernel)
    return correction_from_scores(score(level, sample.values - fitted), level)


def compose(n: int, b_ind: float, rho: float) -> BandwidthPlan:
    b_star = clamp(rho * b_ind, n)
    b_jack = clamp(2.0 * b_star, n, B_JACK_MAX)
    b_isdt = clamp(b_jack * n ** (-1 / 45), n, B_JACK_MAX)
    return BandwidthPlan(b_ind, rho, b_star, b_jack, b_isdt, math.floor(n ** (1 / 3) + 1e-12))


def plan(sample, level: float, kernel: Kernel | None = None) -> BandwidthPlan:
    """Full bandwidth plan for one quantile level."""
    sample = _as_sample(sample)
    b_ind = independence_bandwidth(sample, level, kernel)
    rho = correction_factor(sample, level, b_ind, kernel)
    return compose(sample.n, b_ind, rho)
