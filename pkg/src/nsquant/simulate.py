"""Time-varying AR(1) processes and their true quantile curves.

The observation at time i is the frozen-time process evaluated at t = i/n,

    X_i = a0(t)/(1 - a1(t)) + delta(t) * sum_j a1(t)^j eps_{i-j},

computed from one shared innovation stream, so neighbouring observations
share innovations exactly as the recursion does.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from nsquant.curves import SeriesSample

CHECK_GRID = np.linspace(0.0, 1.0, 1000)
TRUNCATION_TOL = 1e-12
SAS_INDEX = 1.8


def _const(c: float) -> Callable:
    return lambda t: np.full(np.shape(t), float(c))


@dataclass(frozen=True)
class TvAR1Model:
    """G(t, F_i) = a0(t) + a1(t) G(t, F_{i-1}) + delta(t) eps_i.

    ``innovation`` is ``"gaussian"`` or the index of a standard symmetric
    stable law with characteristic function exp(-|u|^index).
    """

    a0: Callable
    a1: Callable
    delta: Callable
    innovation: str | float = "gaussian"

    def __post_init__(self):
        a1 = np.asarray(self.a1(CHECK_GRID), dtype=float)
        d = np.asarray(self.delta(CHECK_GRID), dtype=float)
        if not np.all(np.abs(a1) < 1):
            raise ValueError("sup |a1(t)| must be below 1")
        if not np.all(d > 0):
            raise ValueError("delta(t) must be positive")
        if self.innovation != "gaussian":
            idx = float(self.innovation)
            if not 0 < idx < 2:
                raise ValueError("stable index must lie in (0, 2)")

    @property
    def nu(self) -> float:
        return 2.0 if self.innovation == "gaussian" else float(self.innovation)

    def truncation(self) -> int:
        rho = float(np.max(np.abs(self.a1(CHECK_GRID))))
        if rho == 0.0:
            return 0
        return int(math.ceil(math.log(TRUNCATION_TOL) / math.log(rho)))

    def innovations(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.innovation == "gaussian":
            return rng.standard_normal(size)
        return sas_innovation(float(self.innovation), rng, size)


def sas_innovation(index: float, rng: np.random.Generator, size=None):
    """Standard symmetric stable draws by the Chambers-Mallows-Stuck transform."""
    if not 0 < index < 2:
        raise ValueError("stable index must lie in (0, 2)")
    v = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.standard_exponential(size)
    if index == 1.0:
        return np.tan(v)
    return (np.sin(index * v) / np.cos(v) ** (1 / index)
            * (np.cos((1 - index) * v) / w) ** ((1 - index) / index))


def generate(model: TvAR1Model, n: int, rng: np.random.Generator) -> SeriesSample:
    t = np.arange(1, n + 1) / n
    J = model.truncation()
    eps = model.innovations(n + J, rng)
    a0, a1, d = (np.asarray(f(t), dtype=float) for f in (model.a0, model.a1, model.delta))
    # windows[i, j] = eps_{i-j}, j = 0..J
    windows = np.lib.stride_tricks.sliding_window_view(eps, J + 1)[:, ::-1]
    powers = a1[:, None] ** np.arange(J + 1)[None, :]
    x = a0 / (1 - a1) + d * np.einsum("ij,ij->i", powers, windows)
    return SeriesSample(x)


def sas_cdf(x: float, index: float = SAS_INDEX) -> float:
    """Gil-Pelaez inversion of exp(-|u|^index)."""
    if x == 0:
        return 0.5
    f = lambda u: math.sin(u * x) * math.exp(-u ** index) / u  # noqa: E731
    val, _ = integrate.quad(f, 0, np.inf, limit=500, epsabs=1e-12)
    return 0.5 + val / math.pi


@functools.lru_cache(maxsize=None)
def sas_quantile(level: float, index: float = SAS_INDEX) -> float:
    """Quantile of the standard symmetric stable law, to ~1e-10."""
    if level == 0.5:
        return 0.0
    if level < 0.5:
        return -sas_quantile(1 - level, index)
    hi = 1.0
    while sas_cdf(hi, index) < level:
        hi *= 2
    return optimize.brentq(lambda x: sas_cdf(x, index) - level, 0.0, hi, xtol=1e-12)


def innovation_quantile(model: TvAR1Model, level: float) -> float:
    if model.innovation == "gaussian":
        return float(norm.ppf(level))
    return sas_quantile(level, float(model.innovation))


@dataclass(frozen=True)
class TrueQuantile:
    """Q(t) = shift(t) + delta(t) Q_eps / (1 - |a1(t)|^nu)^(1/nu)."""

    level: float
    nu: float
    eps_quantile: float
    model: TvAR1Model = field(repr=False)

    def null(self, t):
        t = np.asarray(t, dtype=float)
        a1 = np.abs(self.model.a1(t))
        return self.model.delta(t) * self.eps_quantile / (1 - a1 ** self.nu) ** (1 / self.nu)

    def shift(self, t):
        t = np.asarray(t, dtype=float)
        return self.model.a0(t) / (1 - self.model.a1(t))

    def curve(self, t):
        return self.shift(t) + self.null(t)

    def __call__(self, t):
        return self.curve(t)


def true_quantile(model: TvAR1Model, level: float) -> TrueQuantile:
    return TrueQuantile(level, model.nu, innovation_quantile(model, level), model)


# Benchmark designs -----------------------------------------------------------

def benchmark_a1(t):
    return np.sin(2 * np.pi * np.asarray(t, dtype=float)) / 2


def benchmark_delta(t):
    return np.exp((np.asarray(t, dtype=float) - 0.25) ** 2)


def flat_shift(c1: float) -> Callable:
    return _const(c1)


def bump_shift(c2: float, c3: float) -> Callable:
    return lambda t: c2 * np.exp(-c3 * (np.asarray(t, dtype=float) - 0.5) ** 2)


def scenario_model(scenario: str, shift: Callable | None = None) -> TvAR1Model:
    """Benchmark tvAR(1): (a) Gaussian or (b) SaS(1.8) innovations.

    With ``shift`` = phi(t) the intercept is a0 = phi (1 - a1), which moves
    every quantile curve up by phi(t).
    """
    if scenario not in ("a", "b"):
        raise ValueError(f"unknown scenario {scenario!r}")
    innovation = "gaussian" if scenario == "a" else SAS_INDEX
    if shift is None:
        a0 = _const(0.0)
    else:
        a0 = lambda t: shift(t) * (1 - benchmark_a1(t))  # noqa: E731
    return TvAR1Model(a0, benchmark_a1, benchmark_delta, innovation)
