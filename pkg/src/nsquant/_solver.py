"""Compiled kernels for the exact two-parameter check-loss minimisation.

For a fixed slope s the optimal intercept is a weighted alpha-quantile of
x - s*u, so the profiled objective g(s) is convex and piecewise linear with
kinks only at slopes of lines through two data points. The minimiser is
therefore one of those pair slopes; it is located by a randomised selection search
over the candidate set that never sorts it.
"""
import numpy as np
from numba import njit

DROP_WEIGHT = 1e-12
TIE_RTOL = 1e-12


@njit(cache=True)
def wquantile_lower(r, w, alpha, total, br, bw):
    """Smallest v with sum of w[r <= v] >= alpha * total.

    Weighted quickselect on the scratch buffers ``br``/``bw``.
    """
    n = r.size
    for i in range(n):
        br[i] = r[i]
        bw[i] = w[i]
    target = alpha * total * (1.0 - 1e-13)
    lo = 0
    hi = n
    acc = 0.0
    while lo < hi:
        p = br[lo + (hi - lo) // 2]
        # three-way partition of [lo, hi): [< p | == p | > p]
        lt = lo
        i = lo
        gt = hi
        while i < gt:
            v = br[i]
            if v < p:
                br[i], br[lt] = br[lt], v
                bw[i], bw[lt] = bw[lt], bw[i]
                lt += 1
                i += 1
            elif v > p:
                gt -= 1
                br[i], br[gt] = br[gt], v
                bw[i], bw[gt] = bw[gt], bw[i]
            else:
                i += 1
        wl = 0.0
        for k in range(lo, lt):
            wl += bw[k]
        we = 0.0
        for k in range(lt, gt):
            we += bw[k]
        if acc + wl >= target:
            hi = lt
        elif acc + wl + we >= target:
            return p
        else:
            acc += wl + we
            lo = gt
    return r.max()


@njit(cache=True)
def profile(s, u, x, w, alpha, total, br, bw):
    r = x - s * u
    b0 = wquantile_lower(r, w, alpha, total, br, bw)
    obj = 0.0
    for i in range(r.size):
        d = r[i] - b0
        if d >= 0.0:
            obj += w[i] * alpha * d
        else:
            obj += w[i] * (alpha - 1.0) * d
    return obj, b0


@njit(cache=True)
def _pair_slopes(u, x):
    m = u.size
    out = np.empty(m * (m - 1) // 2)
    cnt = 0
    for i in range(m):
        for j in range(i + 1, m):
            du = u[j] - u[i]
            if du != 0.0:
                s = (x[j] - x[i]) / du
                # slopes that overflow (subnormal gaps in u) cannot be represented
                if np.isfinite(s):
                    out[cnt] = s
                    cnt += 1
    return out[:cnt]


@njit(cache=True)
def _select_min(c, u, x, w, alpha, total, br, bw, gap_scale):
    """Minimise g over the candidate slopes in ``c`` (modified in place).

    Candidates closer than ~1e-10 relative to the pivot are treated as the
    pivot itself: their objectives differ only by rounding, so comparing them
    carries no information about the side of the minimum.
    """
    nc = c.size
    state = np.uint64(0x9E3779B97F4A7C15)
    while nc > 1:
        # xorshift index: deterministic, but free of the pair-generation order
        state ^= state << np.uint64(13)
        state ^= state >> np.uint64(7)
        state ^= state << np.uint64(17)
        piv = c[int(state % np.uint64(nc))]
        gap = 1e-10 * max(abs(piv), gap_scale)
        succ = np.inf
        for q in range(nc):
            v = c[q]
            if v > piv + gap and v < succ:
                succ = v
        if succ < np.inf:
            gp = profile(piv, u, x, w, alpha, total, br, bw)[0]
            gs = profile(succ, u, x, w, alpha, total, br, bw)[0]
            keep_right = gs < gp
            bound = succ if keep_right else piv
        else:
            pred = -np.inf
            for q in range(nc):
                v = c[q]
                if v < piv - gap and v > pred:
                    pred = v
            if pred == -np.inf:
                return piv
            gp = profile(piv, u, x, w, alpha, total, br, bw)[0]
            gq = profile(pred, u, x, w, alpha, total, br, bw)[0]
            if gp < gq:
                return piv
            keep_right = False
            bound = pred
        nn = 0
        for q in range(nc):
            v = c[q]
            if (keep_right and v >= bound) or ((not keep_right) and v <= bound):
                c[nn] = v
                nn += 1
        nc = nn
    return c[0]


@njit(cache=True)
def _first_true(lo, hi, uniq, u, x, w, alpha, total, gmax, want_left, br, bw):
    # predicate g(uniq[k]) <= gmax is monotone on [lo, hi]; returns the boundary index
    if want_left:
        while lo < hi:
            mid = (lo + hi) // 2
            if profile(uniq[mid], u, x, w, alpha, total, br, bw)[0] <= gmax:
                hi = mid
            else:
                lo = mid + 1
        return lo
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if profile(uniq[mid], u, x, w, alpha, total, br, bw)[0] <= gmax:
            lo = mid
        else:
            hi = mid - 1
    return lo


@njit(cache=True)
def solve_window(u, x, w, alpha):
    """Exact minimiser of sum w_i rho_alpha(x_i - b0 - b1 u_i) over (b0, b1).

    All weights must be positive. Returns (b0, b1, objective). Ties among
    optimal vertices resolve to the smallest |b1|, then the smallest b0.
    """
    total = w.sum()
    br = np.empty(u.size)
    bw = np.empty(u.size)
    if u.max() - u.min() <= 0.0:
        obj, b0 = profile(0.0, u, x, w, alpha, total, br, bw)
        return b0, 0.0, obj
    cand = _pair_slopes(u, x)
    if cand.size == 0:
        obj, b0 = profile(0.0, u, x, w, alpha, total, br, bw)
        return b0, 0.0, obj
    gap_scale = (x.max() - x.min()) / (u.max() - u.min())
    s = _select_min(cand.copy(), u, x, w, alpha, total, br, bw, gap_scale)
    gstar, b0 = profile(s, u, x, w, alpha, total, br, bw)
    scale = 0.0
    for i in range(x.size):
        scale += w[i] * abs(x[i])
    gmax = gstar + TIE_RTOL * scale

    pred = -np.inf
    succ = np.inf
    for v in cand:
        if v < s and v > pred:
            pred = v
        if v > s and v < succ:
            succ = v
    tie = False
    if pred > -np.inf and profile(pred, u, x, w, alpha, total, br, bw)[0] <= gmax:
        tie = True
    if succ < np.inf and profile(succ, u, x, w, alpha, total, br, bw)[0] <= gmax:
        tie = True
    if not tie:
        return b0, s, gstar

    uniq = np.unique(cand)
    idx = np.searchsorted(uniq, s)
    a = _first_true(0, idx, uniq, u, x, w, alpha, total, gmax, True, br, bw)
    b = _first_true(idx, uniq.size - 1, uniq, u, x, w, alpha, total, gmax, False, br, bw)
    if uniq[a] >= 0.0:
        best = uniq[a]
    elif uniq[b] <= 0.0:
        best = uniq[b]
    else:
        z = np.searchsorted(uniq, 0.0)
        pos = uniq[z]
        neg = uniq[z - 1]
        if pos == 0.0 or pos < -neg:
            best = pos
        elif -neg < pos:
            best = neg
        else:
            gp, bp = profile(pos, u, x, w, alpha, total, br, bw)
            gn, bn = profile(neg, u, x, w, alpha, total, br, bw)
            best = pos if bp <= bn else neg
    obj, b0 = profile(best, u, x, w, alpha, total, br, bw)
    return b0, best, obj


@njit(cache=True)
def fit_rows(t, x, centers, weights, alpha):
    """Solve one local problem per row of ``weights`` (rows align with ``centers``)."""
    g = centers.size
    b0 = np.empty(g)
    b1 = np.empty(g)
    obj = np.empty(g)
    for j in range(g):
        row = weights[j]
        mask = row > DROP_WEIGHT
        uu = t[mask] - centers[j]
        b0[j], b1[j], obj[j] = solve_window(uu, x[mask], row[mask], alpha)
    return b0, b1, obj
