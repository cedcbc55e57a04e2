"""Brute-force reference solvers, written independently of the package code."""
import itertools

import numpy as np


def rho(alpha, r):
    return np.where(r >= 0, alpha * r, (alpha - 1) * r)


def local_linear_bruteforce(alpha, u, x, w):
    """Minimum of sum w rho(x - b0 - b1 u) over every line through two points.

    With at least two distinct design values an optimal line interpolates two
    observations, so the minimum over these lines is the global minimum.
    Lines through one point with slope 0 cover the single-design case.
    """
    best = np.inf
    pairs = [(i, j) for i, j in itertools.combinations(range(len(u)), 2) if u[i] != u[j]]
    for i, j in pairs:
        b1 = (x[j] - x[i]) / (u[j] - u[i])
        b0 = x[i] - b1 * u[i]
        best = min(best, float(np.sum(w * rho(alpha, x - b0 - b1 * u))))
    if not pairs:
        for i in range(len(u)):
            best = min(best, float(np.sum(w * rho(alpha, x - x[i]))))
    return best


def parametric_bruteforce(alpha, G, x):
    """Minimum over every k-subset interpolant with a nonsingular design block."""
    n, k = G.shape
    best = np.inf
    for rows in itertools.combinations(range(n), k):
        A = G[list(rows)]
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        theta = np.linalg.solve(A, x[list(rows)])
        best = min(best, float(np.sum(rho(alpha, x - G @ theta))))
    return best


def parametric_grid(alpha, G, x, theta_center, radius, size=201):
    """Grid search in a box around ``theta_center``; an upper bound on the minimum."""
    k = G.shape[1]
    axes = [np.linspace(c - radius, c + radius, size) for c in theta_center]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    r = x[None, :] - mesh @ G.T
    return float(rho(alpha, r).sum(axis=1).min())
