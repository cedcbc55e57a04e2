"""Simultaneous confidence bands and integrated squared difference tests.

Each test comes in an asymptotic form and a wild-bootstrap form. The
bootstrap never resamples the data: it simulates the Gaussian process

    X_n(t) = sum_i V_i K*((t_i - t)/b) / (n b),    V_i iid N(0, 1),

whose sup-norm and L2-norm approximate the null laws of the standardised
deviations sqrt(pi(t)) (Q~(t) - Q(t)), with pi = f^2 / sigma^2.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import norm

from nsquant.curves import EvalGrid, QuantileCurve, SeriesSample, _as_sample, local_fit
from nsquant.kernels import SQRT2, Kernel, constants, epanechnikov, phi_of, second_order_kernel
from nsquant.nuisance import NuisanceEstimates, estimate_nuisance
from nsquant.quantreg import check_level, design_matrix, solve_parametric

DEFAULT_REPLICATES = 2000
MIN_REPLICATES = 200
DRAW_CHUNK = 250
POWER_GRID = 2001

SCB_ASYMPTOTIC = "SCB-asymptotic"
SCB_BOOTSTRAP = "SCB-bootstrap"
ISDT_ASYMPTOTIC = "ISDT-asymptotic"
ISDT_BOOTSTRAP = "ISDT-bootstrap"
POINTWISE = "pointwise"
BONFERRONI = "Bonferroni"


@dataclass(frozen=True)
class ScbAsymptotic:
    m_star: float
    B_mstar: float
    u_beta: float
    half_width: np.ndarray


@dataclass(frozen=True)
class BootstrapDistribution:
    replicates: int
    sup_norms: np.ndarray
    int_norms: np.ndarray
    seed: int

    def quantile(self, beta: float, which: str = "sup") -> float:
        draws = self.sup_norms if which == "sup" else self.int_norms
        return order_statistic(draws, beta)


@dataclass
class TestReport:
    method: str
    level_alpha: float
    test_size_beta: float
    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    band_lower: np.ndarray | None = None
    band_upper: np.ndarray | None = None
    null_description: str = ""
    bandwidth: float = math.nan
    grid: np.ndarray | None = None
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class


# Constants -------------------------------------------------------------------

def u_beta(beta: float) -> float:
    """Gumbel critical point: exp(-2 exp(-u)) = 1 - beta."""
    return -math.log(math.log((1.0 - beta) ** -0.5))


def B_mstar(bandwidth: float, frakC: float) -> float:
    m_star = 1.0 / bandwidth
    L = 2.0 * math.log(m_star)
    return math.sqrt(L) + (math.log(frakC) - 2 * math.log(math.pi) - 2 * math.log(2)) / (2 * math.sqrt(L))


def order_statistic(draws: np.ndarray, beta: float) -> float:
    """Draw of rank floor((1-beta)(B+1)) + 1, clipped to B.

    With this rank, ``stat > q`` holds exactly when the Monte Carlo p-value
    (1 + #{draws >= stat}) / (B + 1) is below beta.
    """
    B = len(draws)
    rank = min(math.floor((1.0 - beta) * (B + 1)) + 1, B)
    return float(np.partition(np.asarray(draws), rank - 1)[rank - 1])


def mc_pvalue(draws: np.ndarray, statistic: float) -> float:
    return (1.0 + np.count_nonzero(np.asarray(draws) >= statistic)) / (len(draws) + 1.0)


# Gaussian bootstrap process -------------------------------------------------

def band_process_weights(grid_points, bandwidth: float, n: int,
                         kernel_star: Kernel | None = None) -> np.ndarray:
    """(n, G) matrix with entries K*((t_i - t_j)/b) / (n b)."""
    ks = kernel_star or second_order_kernel(epanechnikov())
    t = np.arange(1, n + 1) / n
    scaled = (t[:, None] - np.asarray(grid_points, dtype=float)[None, :]) / bandwidth
    return ks.evaluate(scaled) / (n * bandwidth)


def gaussian_band_process(grid_points, bandwidth: float, n: int, kernel_star: Kernel | None = None,
                          rng: np.random.Generator | None = None, V=None) -> np.ndarray:
    """One draw of X_n on the grid; ``V`` overrides the n standard normals."""
    W = band_process_weights(grid_points, bandwidth, n, kernel_star)
    if V is None:
        rng = rng if rng is not None else np.random.default_rng()
        V = rng.standard_normal(n)
    V = np.asarray(V, dtype=float)
    if V.shape[-1] != n:
        raise ValueError(f"need {n} normals per draw")
    return V @ W


def trapezoid(values, grid_points) -> np.ndarray | float:
    pts = np.asarray(grid_points, dtype=float)
    if pts.size < 2:
        return np.zeros(np.shape(values)[:-1]) if np.ndim(values) > 1 else 0.0
    return np.trapezoid(values, pts, axis=-1)


@functools.lru_cache(maxsize=64)
def _norms_cached(n, bandwidth, lo, hi, size, kernel, replicates, seed):
    pts = EvalGrid.uniform(lo, hi, size).points
    W = band_process_weights(pts, bandwidth, n, second_order_kernel(kernel))
    rng = np.random.default_rng(seed)
    sup = np.empty(replicates)
    l2 = np.empty(replicates)
    for start in range(0, replicates, DRAW_CHUNK):
        stop = min(start + DRAW_CHUNK, replicates)
        X = rng.standard_normal((stop - start, n)) @ W
        sup[start:stop] = np.abs(X).max(axis=1)
        l2[start:stop] = trapezoid(X * X, pts)
    sup.setflags(write=False)
    l2.setflags(write=False)
    return sup, l2


def scb_reference_grid(bandwidth: float, grid_size: int = 200) -> EvalGrid:
    """Grid on [0, 1] for the sup-norm reference law, at least 10 points per bandwidth."""
    return EvalGrid.uniform(0.0, 1.0, max(grid_size, math.ceil(10.0 / bandwidth) + 1))


def bootstrap_distribution(grid: EvalGrid, bandwidth: float, n: int, replicates: int = DEFAULT_REPLICATES,
                           seed: int = 0, kernel: Kernel | None = None) -> BootstrapDistribution:
    """Sup- and L2-norms of ``replicates`` draws of X_n, restricted to ``grid``.

    Draws depend only on the design, so they are cached per
    (n, bandwidth, grid, kernel, replicates, seed). Normals are generated
    sequentially from one stream, so a run with more replicates extends the
    draws of a shorter run with the same seed.
    """
    if replicates < 1:
        raise ValueError("replicates must be positive")
    kernel = kernel or epanechnikov()
    sup, l2 = _norms_cached(int(n), float(bandwidth), float(grid.points[0]), float(grid.points[-1]),
                            len(grid), kernel, int(replicates), int(seed))
    return BootstrapDistribution(int(replicates), sup, l2, int(seed))


# Test preparation ------------------------------------------------------------

@dataclass(frozen=True)
class TestInputs:
    """Jackknife curve and nuisance estimates for one (level, bandwidth)."""

    curve: QuantileCurve
    q_hat: np.ndarray
    nuisance: NuisanceEstimates

    __test__ = False


def prepare(sample, level: float, bandwidth: float, grid_size: int = 200,
            kernel: Kernel | None = None) -> TestInputs:
    """Fit Q^ at b (design points and grid), Q^ at sqrt(2) b, and the nuisances.

    One pass over the local solver serves the jackknife curve, the residual
    scores for sigma^2 and the density evaluation point.
    """
    sample = _as_sample(sample)
    level = check_level(level)
    grid = EvalGrid.inner(bandwidth, grid_size, jackknife=True)
    centers = np.concatenate([sample.times, grid.points])
    q, qp = local_fit(sample, level, bandwidth, centers, kernel)
    q_obs, q_grid, qp_grid = q[:sample.n], q[sample.n:], qp[sample.n:]
    q2, qp2 = local_fit(sample, level, SQRT2 * bandwidth, grid.points, kernel)
    curve = QuantileCurve(level, bandwidth, grid, 2 * q_grid - q2, 2 * qp_grid - qp2, True, sample.n)
    nuis = estimate_nuisance(sample, level, bandwidth, grid, kernel, fitted_obs=q_obs, curve_values=q_grid)
    return TestInputs(curve, q_grid, nuis)


def _null_on_grid(null_curve, grid: EvalGrid) -> np.ndarray:
    if callable(null_curve):
        return np.asarray(null_curve(grid.points), dtype=float) * np.ones(len(grid))
    arr = np.asarray(null_curve, dtype=float)
    if arr.ndim == 0:
        return np.full(len(grid), float(arr))
    if arr.shape != (len(grid),):
        raise ValueError("null curve must have one value per grid point")
    return arr


def _check_inputs(curve: QuantileCurve, nuisance: NuisanceEstimates):
    if len(curve.grid) != len(nuisance.grid):
        raise ValueError("curve and nuisance estimates use different grids")
    if not (np.all(np.isfinite(nuisance.sigma2)) and np.all(np.isfinite(nuisance.density))):
        raise FloatingPointError("non-finite nuisance estimates")
    if curve.n <= 0:
        raise ValueError("curve does not record its sample size")


# SCB -------------------------------------------------------------------------

def scb_asymptotic_band(curve: QuantileCurve, nuisance: NuisanceEstimates, beta: float,
                        kernel: Kernel | None = None) -> ScbAsymptotic:
    kc = constants(kernel or epanechnikov())
    b, n = curve.bandwidth, curve.n
    m_star = 1.0 / b
    if not m_star > 1:
        raise ValueError("bandwidth must be below 1")
    Bm = B_mstar(b, kc.frakC)
    ub = u_beta(beta)
    crit = Bm + ub / math.sqrt(2 * math.log(m_star))
    sd = math.sqrt(kc.phi) * np.sqrt(nuisance.sigma2) / (math.sqrt(n * b) * nuisance.density)
    return ScbAsymptotic(m_star, Bm, ub, sd * crit)


def scb_asymptotic(curve: QuantileCurve, nuisance: NuisanceEstimates, null_curve, beta: float = 0.05,
                   kernel: Kernel | None = None) -> TestReport:
    """Gumbel-calibrated band centred on the jackknife curve."""
    _check_inputs(curve, nuisance)
    kc = constants(kernel or epanechnikov())
    band = scb_asymptotic_band(curve, nuisance, beta, kernel)
    b, n = curve.bandwidth, curve.n
    L = math.sqrt(2 * math.log(band.m_star))
    crit = band.B_mstar + band.u_beta / L
    q0 = _null_on_grid(null_curve, curve.grid)
    sd = math.sqrt(kc.phi) * np.sqrt(nuisance.sigma2) / (math.sqrt(n * b) * nuisance.density)
    stat = float(np.max(np.abs(curve.q - q0) / sd))
    x = L * (stat - band.B_mstar)
    p = float(-np.expm1(-2.0 * np.exp(-x)))
    return TestReport(SCB_ASYMPTOTIC, curve.level, beta, stat, crit, p, bool(stat > crit),
                      curve.q - band.half_width, curve.q + band.half_width,
                      bandwidth=b, grid=curve.grid.points,
                      details={"B_mstar": band.B_mstar, "u_beta": band.u_beta, "m_star": band.m_star})


def scb_bootstrap(curve: QuantileCurve, nuisance: NuisanceEstimates, null_curve, beta: float = 0.05,
                  replicates: int = DEFAULT_REPLICATES, seed: int = 0,
                  kernel: Kernel | None = None,
                  draws: BootstrapDistribution | None = None) -> TestReport:
    """Band Q~ +- q/sqrt(pi) with q the (1-beta) quantile of sup |X_n|.

    The supremum of X_n is taken over the whole unit interval (see
    :func:`scb_reference_grid`) while the band lives on the curve's grid.
    """
    _check_inputs(curve, nuisance)
    if replicates < MIN_REPLICATES:
        raise ValueError(f"use at least {MIN_REPLICATES} bootstrap replicates")
    if draws is None:
        ref = scb_reference_grid(curve.bandwidth, len(curve.grid))
        draws = bootstrap_distribution(ref, curve.bandwidth, curve.n, replicates, seed, kernel)
    q_hat = draws.quantile(beta, "sup")
    q0 = _null_on_grid(null_curve, curve.grid)
    root_pi = np.sqrt(nuisance.pi_hat)
    stat = float(np.max(root_pi * np.abs(curve.q - q0)))
    half = q_hat / root_pi
    return TestReport(SCB_BOOTSTRAP, curve.level, beta, stat, q_hat, mc_pvalue(draws.sup_norms, stat),
                      bool(stat > q_hat), curve.q - half, curve.q + half,
                      bandwidth=curve.bandwidth, grid=curve.grid.points,
                      details={"replicates": draws.replicates, "seed": draws.seed})


# ISDT ------------------------------------------------------------------------

def isdt_asymptotic(curve: QuantileCurve, nuisance: NuisanceEstimates, null_curve, beta: float = 0.05,
                    kernel: Kernel | None = None, weight=None) -> TestReport:
    """Normal-calibrated L2 test; ``weight`` is pi(t), 1 by default."""
    _check_inputs(curve, nuisance)
    kc = constants(kernel or epanechnikov())
    pts = curve.grid.points
    pi = np.ones(len(pts)) if weight is None else _null_on_grid(weight, curve.grid)
    if np.any(pi < 0):
        raise ValueError("weight must be nonnegative")
    q0 = _null_on_grid(null_curve, curve.grid)
    b, n = curve.bandwidth, curve.n
    T = float(trapezoid((curve.q - q0) ** 2 * pi, pts))
    pi_star = pi * nuisance.sigma2 / nuisance.density ** 2
    centre = kc.kstar_at_zero * float(trapezoid(pi_star, pts)) / math.sqrt(b)
    scale = math.sqrt(2 * kc.kstar_conv_sq_integral * float(trapezoid(pi_star ** 2, pts)))
    z = (n * math.sqrt(b) * T - centre) / scale
    crit = float(norm.ppf(1 - beta))
    return TestReport(ISDT_ASYMPTOTIC, curve.level, beta, z, crit, float(norm.sf(z)), bool(z > crit),
                      bandwidth=b, grid=pts, details={"T_n": T, "centre": centre, "scale": scale})


def isdt_bootstrap(curve: QuantileCurve, nuisance: NuisanceEstimates, null_curve, beta: float = 0.05,
                   replicates: int = DEFAULT_REPLICATES, seed: int = 0,
                   kernel: Kernel | None = None,
                   draws: BootstrapDistribution | None = None) -> TestReport:
    """Compare int (Q~ - Q0)^2 pi_hat with the law of int X_n^2, both over the grid interval."""
    _check_inputs(curve, nuisance)
    if replicates < MIN_REPLICATES:
        raise ValueError(f"use at least {MIN_REPLICATES} bootstrap replicates")
    draws = draws or bootstrap_distribution(curve.grid, curve.bandwidth, curve.n, replicates, seed, kernel)
    q_hat = draws.quantile(beta, "int")
    q0 = _null_on_grid(null_curve, curve.grid)
    stat = float(trapezoid((curve.q - q0) ** 2 * nuisance.pi_hat, curve.grid.points))
    return TestReport(ISDT_BOOTSTRAP, curve.level, beta, stat, q_hat, mc_pvalue(draws.int_norms, stat),
                      bool(stat > q_hat), bandwidth=curve.bandwidth, grid=curve.grid.points,
                      details={"replicates": draws.replicates, "seed": draws.seed})


# Pointwise comparators -------------------------------------------------------

def pointwise_test(curve: QuantileCurve, nuisance: NuisanceEstimates, null_curve, beta: float = 0.05,
                   kernel: Kernel | None = None, bonferroni: bool = False) -> TestReport:
    """Normal pointwise band Q~ +- z sqrt(phi_K*) sigma / (sqrt(nb) f).

    ``bonferroni`` replaces beta by beta / n. Rejects when the null leaves
    the band anywhere on the grid.
    """
    _check_inputs(curve, nuisance)
    ks = second_order_kernel(kernel or epanechnikov())
    b, n = curve.bandwidth, curve.n
    level = beta / n if bonferroni else beta
    z = float(norm.isf(level / 2))
    sd = math.sqrt(phi_of(ks)) * np.sqrt(nuisance.sigma2) / (math.sqrt(n * b) * nuisance.density)
    q0 = _null_on_grid(null_curve, curve.grid)
    dev = np.abs(curve.q - q0) / sd
    stat = float(np.max(dev))
    p = float(min(1.0, 2 * norm.sf(stat) * (n if bonferroni else 1)))
    return TestReport(BONFERRONI if bonferroni else POINTWISE, curve.level, beta, stat, z, p,
                      bool(stat > z), curve.q - z * sd, curve.q + z * sd,
                      bandwidth=b, grid=curve.grid.points)


# Parametric nulls ------------------------------------------------------------

def fit_null(sample, level: float, basis: Callable) -> tuple[Callable, str]:
    """Parametric quantile fit theta' g(t) and a description of it."""
    sample = _as_sample(sample)
    fit = solve_parametric(level, sample.times, sample.values, basis)
    theta = fit.theta_hat

    def null(t):
        return design_matrix(basis, np.atleast_1d(np.asarray(t, dtype=float))) @ theta

    desc = "theta_hat=[" + ", ".join(repr(float(v)) for v in theta) + "]"
    return null, desc


def run_test(inputs: TestInputs, null_curve, method: str, beta: float = 0.05,
             replicates: int = DEFAULT_REPLICATES, seed: int = 0, kernel: Kernel | None = None,
             null_description: str = "") -> TestReport:
    curve, nuis = inputs.curve, inputs.nuisance
    if method == SCB_BOOTSTRAP:
        rep = scb_bootstrap(curve, nuis, null_curve, beta, replicates, seed, kernel)
    elif method == ISDT_BOOTSTRAP:
        rep = isdt_bootstrap(curve, nuis, null_curve, beta, replicates, seed, kernel)
    elif method == SCB_ASYMPTOTIC:
        rep = scb_asymptotic(curve, nuis, null_curve, beta, kernel)
    elif method == ISDT_ASYMPTOTIC:
        rep = isdt_asymptotic(curve, nuis, null_curve, beta, kernel)
    elif method == POINTWISE:
        rep = pointwise_test(curve, nuis, null_curve, beta, kernel)
    elif method == BONFERRONI:
        rep = pointwise_test(curve, nuis, null_curve, beta, kernel, bonferroni=True)
    else:
        raise ValueError(f"unknown test method {method!r}")
    rep.null_description = null_description
    return rep


def test_parametric_null(sample, level: float, basis: Callable, beta: float = 0.05,
                         method: str = SCB_BOOTSTRAP, bandwidth: float | None = None,
                         replicates: int = DEFAULT_REPLICATES, seed: int = 0,
                         kernel: Kernel | None = None, grid_size: int = 200) -> TestReport:
    """Test Q_alpha(t) = theta' g(t) for unknown theta.

    theta is estimated by parametric quantile regression and then treated as
    known. Without an explicit bandwidth the data-driven plan is used (b_jack
    for SCB methods, b_isdt for ISDT methods).
    """
    from nsquant.bandwidth import plan

    sample = _as_sample(sample)
    null, desc = fit_null(sample, level, basis)
    if bandwidth is None:
        p = plan(sample, level, kernel)
        bandwidth = p.b_isdt if method.startswith("ISDT") else p.b_jack
    inputs = prepare(sample, level, bandwidth, grid_size, kernel)
    return run_test(inputs, null, method, beta, replicates, seed, kernel, desc)


test_parametric_null.__test__ = False


# Analytic local power --------------------------------------------------------

def _on_unit(fn, t):
    if callable(fn):
        return np.asarray(fn(t), dtype=float) * np.ones_like(t)
    arr = np.asarray(fn, dtype=float)
    if arr.ndim == 0:
        return np.full_like(t, float(arr))
    if arr.shape != t.shape:
        raise ValueError(f"array inputs must have {t.size} values on the unit grid")
    return arr


def scb_power(eta, sigma, density, beta: float = 0.05, kernel: Kernel | None = None) -> float:
    """Asymptotic SCB power 1 - (1-beta)^(s/2) against a local shift eta(t).

    ``eta``, ``sigma`` and ``density`` are callables on [0, 1], scalars, or
    arrays on the 2001-point unit grid.
    """
    kc = constants(kernel or epanechnikov())
    t = np.linspace(0.0, 1.0, POWER_GRID)
    r = _on_unit(eta, t) * _on_unit(density, t) / (math.sqrt(kc.phi) * _on_unit(sigma, t))
    s = float(trapezoid(np.exp(r), t) + trapezoid(np.exp(-r), t))
    return 1.0 - (1.0 - beta) ** (s / 2.0)


def isdt_power(eta, weight, sigma, density, beta: float = 0.05, kernel: Kernel | None = None) -> float:
    """Asymptotic ISDT power Phi(int eta^2 pi / sqrt(2 int(K*conv K*)^2 int pi*^2) - z)."""
    kc = constants(kernel or epanechnikov())
    t = np.linspace(0.0, 1.0, POWER_GRID)
    e, w = _on_unit(eta, t), _on_unit(weight, t)
    pi_star = w * _on_unit(sigma, t) ** 2 / _on_unit(density, t) ** 2
    shift = float(trapezoid(e ** 2 * w, t))
    denom = math.sqrt(2 * kc.kstar_conv_sq_integral * float(trapezoid(pi_star ** 2, t)))
    return float(norm.cdf(shift / denom - norm.ppf(1 - beta)))
