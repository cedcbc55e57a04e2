"""Check loss, its score, and exact quantile-regression solvers.

Two solvers are provided:

* :func:`solve_weighted_local_linear` minimises a kernel-weighted check loss
  over a line (intercept, slope) and returns an optimal vertex, i.e. a line
  through two positively weighted data points.
* :func:`solve_parametric` minimises the unweighted check loss over
  ``theta @ g(t)`` for a basis of dimension k <= 3.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from nsquant import _solver
from nsquant.errors import DegenerateBasisError, EmptyWindowError

ENUMERATION_LIMIT = 60_000


def check_level(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {alpha}")
    return alpha


def check_loss(alpha, x):
    """rho_alpha(x) = alpha x for x >= 0 and (alpha - 1) x otherwise."""
    alpha = check_level(alpha)
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, alpha * x, (alpha - 1.0) * x)
    return out[()] if out.ndim == 0 else out


def score(alpha, x):
    """psi_alpha(x) = alpha - 1{x <= 0}."""
    alpha = check_level(alpha)
    x = np.asarray(x, dtype=float)
    out = np.where(x <= 0, alpha - 1.0, alpha)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class WeightedLinearFit:
    beta0: float
    beta1: float
    objective: float
    active_points: tuple[int, ...]


@dataclass(frozen=True)
class ParametricFit:
    theta_hat: np.ndarray
    basis_dim: int
    objective: float
    active_points: tuple[int, ...] = ()

    def predict(self, basis: Callable, times) -> np.ndarray:
        return design_matrix(basis, np.asarray(times, dtype=float)) @ self.theta_hat


def weighted_objective(alpha, u, x, w, beta0, beta1) -> float:
    r = np.asarray(x, float) - beta0 - beta1 * np.asarray(u, float)
    return float(np.sum(np.asarray(w, float) * check_loss(alpha, r)))


def _active(u, x, b0, b1, idx):
    # indices of the interpolated points, preferring two distinct design values
    r = np.abs(x - b0 - b1 * u)
    order = np.argsort(r, kind="stable")
    first = order[0]
    for j in order[1:]:
        if u[j] != u[first]:
            return (int(idx[first]), int(idx[j]))
    return (int(idx[first]),)


def solve_weighted_local_linear(alpha, centered_times, values, weights) -> WeightedLinearFit:
    """Globally minimise sum w_i rho_alpha(X_i - b0 - b1 u_i).

    Observations with weight below 1e-12 are ignored. If the remaining design
    has a single distinct time the slope is unidentified: ``beta1`` is 0 and
    ``beta0`` is the lower weighted alpha-quantile of the values.
    """
    alpha = check_level(alpha)
    u = np.asarray(centered_times, dtype=float)
    x = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not (u.shape == x.shape == w.shape) or u.ndim != 1:
        raise ValueError("centered_times, values and weights must be equal-length vectors")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    keep = np.flatnonzero(w > _solver.DROP_WEIGHT)
    if keep.size == 0:
        raise EmptyWindowError("all weights are zero")
    uu, xx, ww = u[keep], x[keep], w[keep]
    b0, b1, obj = _solver.solve_window(uu, xx, ww, alpha)
    return WeightedLinearFit(float(b0), float(b1), float(obj), _active(uu, xx, b0, b1, keep))


def design_matrix(basis: Callable, times: np.ndarray) -> np.ndarray:
    g = np.asarray(basis(times), dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] != times.size:
        raise ValueError("basis must map n times to an (n, k) array")
    return g


def polynomial_basis(degree: int) -> Callable[[np.ndarray], np.ndarray]:
    """Basis (1, t, ..., t^degree) for constant, linear and quadratic nulls."""
    if degree not in (0, 1, 2):
        raise ValueError("polynomial nulls of degree 0, 1 or 2 are supported")

    def basis(t):
        t = np.asarray(t, dtype=float)
        return np.vander(t, degree + 1, increasing=True)

    basis.degree = degree
    return basis


def _objective_many(alpha, G, x, thetas):
    r = x[None, :] - thetas @ G.T
    return np.sum(np.where(r >= 0, alpha * r, (alpha - 1.0) * r), axis=1)


def _enumerate_vertices(alpha, G, x):
    n, k = G.shape
    subsets = np.array(list(itertools.combinations(range(n), k)), dtype=np.intp)
    A = G[subsets]  # (m, k, k)
    b = x[subsets]
    det = np.linalg.det(A)
    scale = np.max(np.abs(G)) ** k
    ok = np.abs(det) > 1e-12 * max(scale, 1e-300)
    if not np.any(ok):
        raise DegenerateBasisError("every k-subset of design rows is singular")
    subsets, A, b = subsets[ok], A[ok], b[ok]
    thetas = np.linalg.solve(A, b[..., None])[..., 0]
    objs = _objective_many(alpha, G, x, thetas)
    gmin = objs.min()
    tied = np.flatnonzero(objs <= gmin + 1e-12 * max(np.sum(np.abs(x)), 1e-300))
    # deterministic tie-break: smallest norm, then lexicographic
    key = sorted(tied, key=lambda i: (float(np.linalg.norm(thetas[i])), tuple(thetas[i])))
    best = key[0]
    return thetas[best], float(objs[best]), tuple(int(i) for i in subsets[best])


def _lp_vertex(alpha, G, x):
    n, k = G.shape
    # variables: theta (free), r+ >= 0, r- >= 0 with G theta + r+ - r- = x
    c = np.concatenate([np.zeros(k), np.full(n, alpha), np.full(n, 1.0 - alpha)])
    A_eq = np.hstack([G, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * k + [(0, None)] * (2 * n)
    res = optimize.linprog(c, A_eq=A_eq, b_eq=x, bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise DegenerateBasisError(f"linear program failed: {res.message}")
    theta = res.x[:k]
    # snap to the exact vertex through the k best-interpolated rows
    order = np.argsort(np.abs(x - G @ theta), kind="stable")
    rows: list[int] = []
    for i in order:
        trial = rows + [int(i)]
        if np.linalg.matrix_rank(G[trial]) == len(trial):
            rows = trial
        if len(rows) == k:
            break
    obj_lp = float(_objective_many(alpha, G, x, theta[None, :])[0])
    if len(rows) == k:
        snapped = np.linalg.solve(G[rows], x[rows])
        obj_snap = float(_objective_many(alpha, G, x, snapped[None, :])[0])
        if obj_snap <= obj_lp * (1 + 1e-9) + 1e-12:
            return snapped, obj_snap, tuple(rows)
    return theta, obj_lp, tuple(rows)


def solve_parametric(alpha, times, values, basis: Callable, method: str = "auto") -> ParametricFit:
    """Minimise sum rho_alpha(X_i - theta' g(t_i)) over theta in R^k, k <= 3.

    ``method="enumerate"`` visits every k-subset of interpolated points;
    ``"lp"`` solves the linear program with a simplex method and snaps the
    result onto the vertex it identifies. ``"auto"`` enumerates when the
    number of subsets is at most ``ENUMERATION_LIMIT``.
    """
    alpha = check_level(alpha)
    t = np.asarray(times, dtype=float)
    x = np.asarray(values, dtype=float)
    G = design_matrix(basis, t)
    n, k = G.shape
    if k > 3:
        raise ValueError("parametric bases are limited to dimension 3")
    if n < k:
        raise ValueError(f"need at least {k} observations, got {n}")
    if np.linalg.matrix_rank(G) < k:
        raise DegenerateBasisError("design matrix is rank deficient")
    if method == "auto":
        method = "enumerate" if math.comb(n, k) <= ENUMERATION_LIMIT else "lp"
    if method == "enumerate":
        theta, obj, rows = _enumerate_vertices(alpha, G, x)
    elif method == "lp":
        theta, obj, rows = _lp_vertex(alpha, G, x)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ParametricFit(np.asarray(theta, dtype=float), k, obj, rows)
