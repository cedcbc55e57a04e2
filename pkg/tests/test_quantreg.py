import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy.optimize import linprog

from nsquant.errors import DegenerateBasisError, EmptyWindowError
from nsquant.quantreg import (check_loss, polynomial_basis, score, solve_parametric,
                              solve_weighted_local_linear, weighted_objective)
from oracles import local_linear_bruteforce, parametric_bruteforce, parametric_grid, rho

levels = st.floats(0.02, 0.98)


def close(a, b, rel=1e-9, floor=0.0):
    return abs(a - b) <= rel * max(abs(b), floor)


# check loss ------------------------------------------------------------------

@given(levels, st.floats(-1e6, 1e6))
def test_check_loss_nonnegative_and_matches_score_form(alpha, x):
    val = check_loss(alpha, x)
    assert val >= 0
    assert val == pytest.approx(x * (alpha - (x < 0)), rel=1e-15, abs=0)


def test_check_loss_and_score_examples():
    assert check_loss(0.5, -2.0) == 1.0
    assert check_loss(0.9, 1.0) == 0.9
    assert check_loss(0.9, -1.0) == pytest.approx(0.1)
    assert score(0.3, 0.0) == pytest.approx(-0.7)
    assert score(0.3, 1e-300) == pytest.approx(0.3)
    np.testing.assert_allclose(score(0.25, np.array([-1.0, 2.0])), [-0.75, 0.25])


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_levels_outside_unit_interval_rejected(bad):
    with pytest.raises(ValueError):
        check_loss(bad, 1.0)


# weighted local linear -------------------------------------------------------

def random_window(rng, m, ties=False):
    u = np.sort(rng.uniform(-1, 1, m))
    x = rng.standard_normal(m)
    if ties:
        u = np.round(u, 1)
        x = np.round(x, 1)
    w = 0.75 * (1 - u**2) + rng.uniform(0, 0.1, m)
    return u, x, w


@pytest.mark.parametrize("ties", [False, True])
def test_local_linear_matches_bruteforce(ties):
    rng = np.random.default_rng(11 + ties)
    for _ in range(300):
        m = int(rng.integers(2, 13))
        u, x, w = random_window(rng, m, ties)
        alpha = float(rng.uniform(0.05, 0.95))
        fit = solve_weighted_local_linear(alpha, u, x, w)
        ref = local_linear_bruteforce(alpha, u, x, w)
        assert close(fit.objective, ref, floor=1e-6 * np.sum(w * np.abs(x)))
        assert fit.objective == pytest.approx(weighted_objective(alpha, u, x, w, fit.beta0, fit.beta1),
                                              rel=1e-12, abs=1e-14)


def test_local_linear_matches_linear_program_on_large_windows():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = int(rng.integers(50, 200))
        u, x, w = random_window(rng, m)
        alpha = float(rng.uniform(0.1, 0.9))
        fit = solve_weighted_local_linear(alpha, u, x, w)
        A = np.hstack([np.ones((m, 1)), u[:, None], np.eye(m), -np.eye(m)])
        c = np.concatenate([[0, 0], alpha * w, (1 - alpha) * w])
        lp = linprog(c, A_eq=A, b_eq=x, bounds=[(None, None)] * 2 + [(0, None)] * (2 * m),
                     method="highs-ipm")
        assert fit.objective <= lp.fun * (1 + 1e-9)
        assert close(fit.objective, lp.fun, rel=1e-7)


def test_solution_interpolates_two_points():
    rng = np.random.default_rng(3)
    u, x, w = random_window(rng, 30)
    fit = solve_weighted_local_linear(0.7, u, x, w)
    assert len(fit.active_points) == 2
    i, j = fit.active_points
    for k in (i, j):
        assert x[k] == pytest.approx(fit.beta0 + fit.beta1 * u[k], abs=1e-12)


def test_single_design_value_returns_weighted_quantile():
    u = np.zeros(5)
    x = np.array([3.0, 1.0, 2.0, 5.0, 4.0])
    fit = solve_weighted_local_linear(0.5, u, x, np.ones(5))
    assert fit.beta1 == 0.0
    assert fit.beta0 == 3.0


def test_zero_weights_are_dropped_and_all_zero_raises():
    u = np.linspace(-1, 1, 6)
    x = np.array([0.0, 1, 2, 100, -100, 5])
    w = np.array([1.0, 1, 1, 0, 0, 1])
    fit = solve_weighted_local_linear(0.5, u, x, w)
    keep = w > 0
    ref = local_linear_bruteforce(0.5, u[keep], x[keep], w[keep])
    assert fit.objective == pytest.approx(ref, rel=1e-12)
    with pytest.raises(EmptyWindowError):
        solve_weighted_local_linear(0.5, u, x, np.zeros(6))


def test_bad_inputs_rejected():
    with pytest.raises(ValueError):
        solve_weighted_local_linear(0.5, [0, 1], [0, 1, 2], [1, 1])
    with pytest.raises(ValueError):
        solve_weighted_local_linear(0.5, [0, 1], [0, 1], [1, -1])


windows = st.integers(3, 10).flatmap(lambda m: st.tuples(
    hnp.arrays(float, m, elements=st.floats(-1, 1), unique=True),
    hnp.arrays(float, m, elements=st.floats(-10, 10)),
    hnp.arrays(float, m, elements=st.floats(0.01, 1)),
))


@given(windows, levels, st.floats(-5, 5), st.floats(-5, 5))
def test_local_linear_equivariant_under_added_lines(win, alpha, a, c):
    u, x, w = win
    f0 = solve_weighted_local_linear(alpha, u, x, w)
    f1 = solve_weighted_local_linear(alpha, u, x + a + c * u, w)
    scale = 1e-9 * (1 + np.abs(x).sum() + abs(a) + abs(c))
    assert abs(f1.objective - f0.objective) <= scale * max(1.0, w.sum())
    # the optimum may be non-unique; compare objectives at the shifted solution
    shifted = weighted_objective(alpha, u, x + a + c * u, w, f0.beta0 + a, f0.beta1 + c)
    assert abs(shifted - f1.objective) <= scale * max(1.0, w.sum())


@given(windows, levels, st.floats(0.1, 10))
def test_local_linear_scale_equivariance(win, alpha, s):
    u, x, w = win
    f0 = solve_weighted_local_linear(alpha, u, x, w)
    f1 = solve_weighted_local_linear(alpha, u, s * x, w)
    assert f1.objective == pytest.approx(s * f0.objective, rel=1e-9, abs=1e-9)


@given(windows, levels)
def test_local_linear_subgradient_optimality(win, alpha):
    u, x, w = win
    fit = solve_weighted_local_linear(alpha, u, x, w)
    r = x - fit.beta0 - fit.beta1 * u
    # small moves in any direction cannot decrease the objective
    for d0, d1 in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]:
        eps = 1e-7
        moved = weighted_objective(alpha, u, x, w, fit.beta0 + eps * d0, fit.beta1 + eps * d1)
        assert moved >= fit.objective - 1e-12 * (1 + np.sum(w * np.abs(r)))


# parametric ------------------------------------------------------------------

@pytest.mark.parametrize("degree", [0, 1, 2])
def test_parametric_matches_bruteforce_and_grid(degree):
    rng = np.random.default_rng(100 + degree)
    basis = polynomial_basis(degree)
    for _ in range(60):
        n = int(rng.integers(degree + 2, 13))
        t = np.arange(1, n + 1) / n
        x = rng.standard_normal(n) + 2 * t
        alpha = float(rng.uniform(0.05, 0.95))
        fit = solve_parametric(alpha, t, x, basis)
        G = basis(t)
        ref = parametric_bruteforce(alpha, G, x)
        assert close(fit.objective, ref, floor=1e-6)
        grid = parametric_grid(alpha, G, x, fit.theta_hat, 0.5, 41 if degree == 2 else 201)
        assert fit.objective <= grid + 1e-12


def test_constant_fit_is_a_sample_quantile():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(11)
    t = np.arange(1, 12) / 11
    fit = solve_parametric(0.5, t, x, polynomial_basis(0))
    assert fit.theta_hat[0] == np.median(x)


def test_lp_route_agrees_with_enumeration():
    rng = np.random.default_rng(9)
    for degree in (1, 2):
        basis = polynomial_basis(degree)
        for _ in range(10):
            n = 40
            t = np.arange(1, n + 1) / n
            x = 1 - t + rng.standard_t(3, n)
            alpha = float(rng.uniform(0.1, 0.9))
            a = solve_parametric(alpha, t, x, basis, method="enumerate")
            b = solve_parametric(alpha, t, x, basis, method="lp")
            assert b.objective == pytest.approx(a.objective, rel=1e-9)
            assert b.objective == pytest.approx(np.sum(rho(alpha, x - basis(t) @ b.theta_hat)), rel=1e-12)


def test_parametric_recovers_exact_line():
    t = np.arange(1, 31) / 30
    fit = solve_parametric(0.3, t, 2 - 3 * t, polynomial_basis(1))
    np.testing.assert_allclose(fit.theta_hat, [2, -3], atol=1e-12)
    assert fit.objective == pytest.approx(0.0, abs=1e-12)


def test_parametric_errors():
    t = np.ones(5)
    with pytest.raises(DegenerateBasisError):
        solve_parametric(0.5, t, np.arange(5.0), polynomial_basis(1))
    with pytest.raises(ValueError):
        solve_parametric(0.5, [0.5], [1.0], polynomial_basis(1))
    with pytest.raises(ValueError):
        polynomial_basis(3)
    with pytest.raises(ValueError):
        solve_parametric(0.5, np.arange(6) / 6, np.arange(6.0), lambda s: np.vander(s, 4))


@given(st.integers(0, 2), levels, st.floats(-3, 3), st.floats(-3, 3))
def test_parametric_equivariance(degree, alpha, a, c):
    rng = np.random.default_rng(degree)
    n = 9
    t = np.arange(1, n + 1) / n
    x = rng.standard_normal(n)
    basis = polynomial_basis(degree)
    f0 = solve_parametric(alpha, t, x, basis)
    f1 = solve_parametric(alpha, t, x + a + (c * t if degree else 0), basis)
    assert f1.objective == pytest.approx(f0.objective, rel=1e-9, abs=1e-9)
