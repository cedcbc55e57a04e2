"""Local linear quantile curves on an evaluation grid, and their jackknife."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nsquant import _solver
from nsquant.errors import EmptyWindowError
from nsquant.kernels import SQRT2, Kernel, epanechnikov
from nsquant.quantreg import check_level

GRID_SIZE = 200
MIN_SAMPLE = 20


@dataclass(frozen=True)
class SeriesSample:
    """Observed series X_1..X_n on the rescaled design t_i = i/n."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("series must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("series contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n


@dataclass(frozen=True)
class EvalGrid:
    points: np.ndarray
    inner_lo: float
    inner_hi: float

    @classmethod
    def uniform(cls, lo: float, hi: float, size: int = GRID_SIZE) -> "EvalGrid":
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"grid interval [{lo}, {hi}] is not inside [0, 1]")
        if size < 2 and hi > lo:
            raise ValueError("grid needs at least two points")
        pts = np.linspace(lo, hi, size) if hi > lo else np.array([lo])
        return cls(pts, lo, hi)

    @classmethod
    def inner(cls, bandwidth: float, size: int = GRID_SIZE, jackknife: bool = False) -> "EvalGrid":
        """Grid on [b, 1-b], or on [sqrt(2) b, 1 - sqrt(2) b] for jackknife fits."""
        edge = SQRT2 * bandwidth if jackknife else bandwidth
        if edge >= 0.5:
            raise ValueError(f"bandwidth {bandwidth} leaves no interior interval")
        return cls.uniform(edge, 1.0 - edge, size)

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class QuantileCurve:
    level: float
    bandwidth: float
    grid: EvalGrid
    q: np.ndarray
    qprime: np.ndarray
    jackknifed: bool = False
    n: int = 0


def _as_sample(sample) -> SeriesSample:
    return sample if isinstance(sample, SeriesSample) else SeriesSample(np.asarray(sample))


def local_fit(sample: SeriesSample, alpha: float, bandwidth: float, centers,
              kernel: Kernel | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Local linear (level, slope) estimates at arbitrary centres in [0, 1].

    No interior restriction is imposed, so this also serves the boundary
    fits needed for residual scores at every design point.
    """
    kernel = kernel or epanechnikov()
    alpha = check_level(alpha)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    t = sample.times
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    scaled = (t[None, :] - centers[:, None]) / bandwidth
    weights = np.where(np.abs(scaled) <= kernel.support, kernel.evaluate(scaled), 0.0)
    mass = (weights > _solver.DROP_WEIGHT).any(axis=1)
    if not mass.all():
        bad = float(centers[np.flatnonzero(~mass)[0]])
        raise EmptyWindowError(f"no observation within bandwidth of t={bad:.6g}", bad)
    b0, b1, _ = _solver.fit_rows(t, sample.values, centers, np.ascontiguousarray(weights), alpha)
    return b0, b1


def fit_curve(sample, level: float, bandwidth: float, grid: EvalGrid,
              kernel: Kernel | None = None) -> QuantileCurve:
    """Local linear quantile curve and slope on ``grid``."""
    sample = _as_sample(sample)
    if sample.n < MIN_SAMPLE:
        raise ValueError(f"need at least {MIN_SAMPLE} observations, got {sample.n}")
    if not 0.0 < bandwidth < 0.5:
        raise ValueError(f"bandwidth must lie in (0, 1/2), got {bandwidth}")
    tol = 1e-12
    if grid.points.min() < bandwidth - tol or grid.points.max() > 1 - bandwidth + tol:
        raise ValueError("grid must lie within [bandwidth, 1 - bandwidth]")
    q, qp = local_fit(sample, level, bandwidth, grid.points, kernel)
    return QuantileCurve(level, bandwidth, grid, q, qp, False, sample.n)


def jackknife_curve(sample, level: float, bandwidth: float, grid: EvalGrid,
                    kernel: Kernel | None = None) -> QuantileCurve:
    """Bias-reduced curve 2 Q(b) - Q(sqrt(2) b), slopes combined the same way."""
    sample = _as_sample(sample)
    if sample.n < MIN_SAMPLE:
        raise ValueError(f"need at least {MIN_SAMPLE} observations, got {sample.n}")
    wide = SQRT2 * bandwidth
    tol = 1e-12
    if not 0.0 < wide < 0.5:
        raise ValueError(f"sqrt(2) * bandwidth must lie in (0, 1/2), got {wide}")
    if grid.points.min() < wide - tol or grid.points.max() > 1 - wide + tol:
        raise ValueError("grid must lie within [sqrt(2) b, 1 - sqrt(2) b]")
    q1, p1 = local_fit(sample, level, bandwidth, grid.points, kernel)
    q2, p2 = local_fit(sample, level, wide, grid.points, kernel)
    return QuantileCurve(level, bandwidth, grid, 2 * q1 - q2, 2 * p1 - p2, True, sample.n)
