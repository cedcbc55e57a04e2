"""Smoothing kernels, their moment constants, and the jackknife kernel."""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from nsquant.errors import QuadratureError

SQRT2 = math.sqrt(2.0)
QUAD_TOL = 1e-10
CONV_GRID_SIZE = 2001


@dataclass(frozen=True)
class Kernel:
    """A symmetric, compactly supported kernel.

    ``evaluate`` and ``derivative`` must accept numpy arrays. ``support`` is
    the half-width of the support interval, 1 for first-order kernels.
    """

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    support: float = 1.0
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class KernelConstants:
    phi: float
    frakC: float
    mu2: float
    kstar_at_zero: float
    kstar_conv_sq_integral: float


def _epan(x):
    x = np.asarray(x, dtype=float)
    return 0.75 * np.maximum(0.0, 1.0 - x * x)


def _epan_deriv(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, -1.5 * x, 0.0)


EPANECHNIKOV = Kernel("epanechnikov", _epan, _epan_deriv, 1.0, (-1.0, 1.0))


def epanechnikov() -> Kernel:
    """The Epanechnikov kernel 3/4 (1 - x^2)_+ with its closed-form derivative."""
    return EPANECHNIKOV


def second_order_kernel(k: Kernel) -> Kernel:
    """Jackknife kernel 2K(x) - K(x/sqrt 2)/sqrt 2.

    Its second moment vanishes, so local fits with it have bias of smaller
    order than fits with ``k``. Support widens to sqrt(2) times that of ``k``.
    """

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * k.evaluate(x) - k.evaluate(x / SQRT2) / SQRT2

    def derivative(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * k.derivative(x) - 0.5 * k.derivative(x / SQRT2)

    bps = tuple(sorted(set(k.breakpoints) | {b * SQRT2 for b in k.breakpoints}))
    return Kernel(f"jackknife({k.name})", evaluate, derivative, SQRT2 * k.support, bps)


def _quad(f, lo, hi, points=(), tol=QUAD_TOL):
    inner = [p for p in points if lo < p < hi]
    # convergence is judged by the error estimate below, not by quad's warning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(f, lo, hi, points=inner or None, epsabs=tol * 1e-2,
                                    epsrel=0.0, limit=200)
    if not np.isfinite(value) or err > tol:
        raise QuadratureError(f"quadrature on [{lo:g}, {hi:g}] did not converge", err)
    return value


def integrate_kernel(k: Kernel, fn=None, tol: float = QUAD_TOL) -> float:
    """Integral of ``fn(x, K(x))`` over the kernel support (default: K itself)."""
    if fn is None:
        fn = lambda x, kx: kx  # noqa: E731
    f = lambda x: float(fn(x, k.evaluate(np.array(x))))  # noqa: E731
    return _quad(f, -k.support, k.support, k.breakpoints, tol)


def self_convolution(k: Kernel, t: float, tol: float = QUAD_TOL) -> float:
    """(K conv K)(t) = integral of K(u) K(t - u) du by adaptive quadrature."""
    s = k.support
    lo, hi = max(-s, t - s), min(s, t + s)
    if hi <= lo:
        return 0.0
    pts = set(k.breakpoints) | {t - b for b in k.breakpoints}
    f = lambda u: float(k.evaluate(np.array(u)) * k.evaluate(np.array(t - u)))  # noqa: E731
    return _quad(f, lo, hi, sorted(pts), tol)


@functools.lru_cache(maxsize=None)
def conv_table(k: Kernel) -> tuple[np.ndarray, np.ndarray]:
    """Self-convolution of K* on a uniform grid over its support [-2s, 2s]."""
    ks = second_order_kernel(k)
    grid = np.linspace(-2 * ks.support, 2 * ks.support, CONV_GRID_SIZE)
    # symmetric in t, so only the nonnegative half is integrated
    half = grid[CONV_GRID_SIZE // 2:]
    vals_half = np.array([self_convolution(ks, float(t)) for t in half])
    vals = np.concatenate([vals_half[:0:-1], vals_half])
    return grid, vals


@functools.lru_cache(maxsize=None)
def constants(k: Kernel) -> KernelConstants:
    """phi, frakC, mu2 of ``k`` and the two convolution functionals of its K*."""
    phi = integrate_kernel(k, lambda x, kx: kx * kx)
    d2 = _quad(lambda x: float(k.derivative(np.array(x)) ** 2), -k.support, k.support,
               k.breakpoints)
    mu2 = integrate_kernel(k, lambda x, kx: x * x * kx)
    ks = second_order_kernel(k)
    at_zero = self_convolution(ks, 0.0)
    grid, vals = conv_table(k)
    sq_int = float(np.trapezoid(vals * vals, grid))
    return KernelConstants(phi=phi, frakC=d2 / phi, mu2=mu2, kstar_at_zero=at_zero,
                           kstar_conv_sq_integral=sq_int)


def phi_of(k: Kernel) -> float:
    """Integral of K^2, for kernels without cached constants (e.g. K*)."""
    return integrate_kernel(k, lambda x, kx: kx * kx)
