import numpy as np
import pytest
from scipy.optimize import rosen, rosen_der

from spxvix_ot.lbfgs import (CONVERGED, STALLED, DivergenceError, LineSearchError, _Phi,
                             lbfgs_minimize, two_loop, wolfe_search)


def quadratic(dim, rng):
    q = rng.normal(size=(dim, dim))
    h = q @ q.T + dim * np.eye(dim)
    b = rng.normal(size=dim)
    return h, b, (lambda x: (0.5 * x @ h @ x - b @ x, h @ x - b))


def test_quadratic_finite_termination(rng):
    for dim in (2, 5, 8):
        h, b, fun = quadratic(dim, rng)
        res = lbfgs_minimize(fun, np.zeros(dim), gtol=1e-8, c2=1e-4, max_iter=50)
        assert res.status == CONVERGED
        assert res.n_iter <= dim + 1
        np.testing.assert_allclose(res.x, np.linalg.solve(h, b), atol=1e-7)


def test_rosenbrock():
    res = lbfgs_minimize(lambda x: (rosen(x), rosen_der(x)), np.array([-1.2, 1.0, 0.5]),
                         gtol=1e-8, max_iter=500)
    assert res.status == CONVERGED
    np.testing.assert_allclose(res.x, 1.0, atol=1e-6)
    assert len(res.f_trace) == res.n_iter + 1
    assert all(b <= a for a, b in zip(res.f_trace, res.f_trace[1:]))


def test_two_loop_matches_dense_bfgs(rng):
    dim = 4
    h, _, _ = quadratic(dim, rng)
    pairs = []
    for _ in range(3):
        s = rng.normal(size=dim)
        y = h @ s
        rho = 1.0 / (s @ y)
        pairs.append((s, y, rho))
    gamma = (pairs[-1][0] @ pairs[-1][1]) / (pairs[-1][1] @ pairs[-1][1])
    hinv = gamma * np.eye(dim)
    for s, y, rho in pairs:
        v = np.eye(dim) - rho * np.outer(y, s)
        hinv = v.T @ hinv @ v + rho * np.outer(s, s)
    g = rng.normal(size=dim)
    np.testing.assert_allclose(two_loop(g, pairs, gamma), hinv @ g, rtol=1e-10)


def test_failed_evaluations_shrink_the_step():
    class Boom(RuntimeError):
        pass

    def fun(x):
        if abs(x[0]) > 0.5:
            raise Boom("outside trust region")
        return (x[0] - 0.4) ** 2, np.array([2 * (x[0] - 0.4)])

    res = lbfgs_minimize(fun, np.array([-0.4]), gtol=1e-10, recoverable=(Boom,), max_iter=50)
    assert res.status == CONVERGED
    assert res.x[0] == pytest.approx(0.4, abs=1e-8)


def test_divergence_at_start():
    with pytest.raises(DivergenceError):
        lbfgs_minimize(lambda x: (np.nan, x), np.zeros(2))


def test_stall_is_a_status():
    # a kink at the optimum: no step gives sufficient decrease once there
    res = lbfgs_minimize(lambda x: (abs(x[0]), np.array([np.sign(x[0]) or 1.0])), np.array([0.0]),
                         gtol=1e-12, max_iter=10)
    assert res.status == STALLED


def test_wolfe_search_rejects_ascent():
    phi = _Phi(lambda x: (x @ x, 2 * x), np.ones(1), np.ones(1), ())
    with pytest.raises(LineSearchError):
        wolfe_search(phi, 1.0, 2.0, 1.0)


def test_wolfe_conditions_hold(rng):
    h, b, fun = quadratic(3, rng)
    x = rng.normal(size=3)
    f0, g0 = fun(x)
    d = -g0
    phi = _Phi(fun, x, d, ())
    t = wolfe_search(phi, f0, g0 @ d, 1.0, c1=1e-4, c2=0.9)
    f, g = fun(x + t * d)
    assert f <= f0 + 1e-4 * t * (g0 @ d)
    assert abs(g @ d) <= 0.9 * abs(g0 @ d)


def test_gamma_warm_start(rng):
    h, b, fun = quadratic(3, rng)
    res = lbfgs_minimize(fun, np.zeros(3), gtol=1e-8, max_iter=50)
    assert res.gamma is not None and res.gamma > 0
    again = lbfgs_minimize(fun, np.zeros(3), gtol=1e-8, max_iter=50, gamma0=res.gamma)
    assert again.status == CONVERGED
