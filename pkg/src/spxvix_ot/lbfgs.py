"""Limited-memory BFGS with a strong-Wolfe line search.

The objective is a callable ``fun(x) -> (f, grad)`` that is minimised.  A
trial point at which ``fun`` raises one of ``recoverable`` (or returns a
non-finite value) is treated as infinitely bad and the step is shortened.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
STALLED = "stalled"


class LineSearchError(RuntimeError):
    pass


class DivergenceError(RuntimeError):
    """Objective became NaN at an accepted point; carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    n_iter: int
    n_eval: int
    status: str
    f_trace: list = field(default_factory=list)
    gmax_trace: list = field(default_factory=list)
    payload: object = None
    gamma: float | None = None

    @property
    def gmax(self):
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def two_loop(grad, pairs, gamma):
    """Apply the inverse-Hessian approximation to ``grad``."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    r = gamma * q
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ r)
        r += (a - b) * s
    return r


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic through two points with slopes, or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


class _Phi:
    """Objective restricted to the ray ``x + t d``."""

    def __init__(self, fun, x, d, recoverable):
        self.fun, self.x, self.d, self.recoverable = fun, x, d, recoverable
        self.n_eval = 0
        self.last = {}

    def __call__(self, t):
        self.n_eval += 1
        try:
            f, g, *rest = self.fun(self.x + t * self.d)
        except self.recoverable as exc:
            log.debug("trial step %.3e rejected: %s", t, exc)
            return np.inf, np.nan
        f = float(f)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            return np.inf, np.nan
        self.last[t] = (f, np.asarray(g, dtype=float), rest[0] if rest else None)
        return f, float(np.asarray(g) @ self.d)


def wolfe_search(phi, f0, g0, t_init, c1=1e-4, c2=0.9, max_eval=20, t_max=1e10):
    """Step length satisfying the strong Wolfe conditions.

    Bracketing then zoom with safeguarded cubic interpolation; on a failed
    trial the step is cut by 10.  Falls back to the best sufficient-decrease
    point seen, or raises :class:`LineSearchError`.
    """
    if g0 >= 0:
        raise LineSearchError("not a descent direction")
    t_prev, f_prev, g_prev = 0.0, f0, g0
    t = t_init
    best = None
    n = 0

    def note(t, f):
        nonlocal best
        if f <= f0 + c1 * t * g0 and (best is None or f < best[1]):
            best = (t, f)

    def zoom(lo, flo, glo, hi, fhi, ghi):
        nonlocal n
        while n < max_eval:
            n += 1
            tc = None
            if np.isfinite(fhi) and np.isfinite(ghi):
                tc = _cubic_min(lo, flo, glo, hi, fhi, ghi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if tc is None or not (left + margin <= tc <= right - margin):
                tc = 0.5 * (lo + hi)
            fc, gc = phi(tc)
            note(tc, fc)
            if fc > f0 + c1 * tc * g0 or fc >= flo or not np.isfinite(fc):
                hi, fhi, ghi = tc, fc, gc
            else:
                if abs(gc) <= -c2 * g0:
                    return tc
                if gc * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = tc, fc, gc
            if abs(hi - lo) < 1e-14 * max(1.0, abs(lo)):
                break
        return None

    while n < max_eval:
        n += 1
        f, g = phi(t)
        note(t, f)
        if not np.isfinite(f):
            # failed evaluation: retreat toward the last good point
            t = t_prev + 0.1 * (t - t_prev)
            continue
        if f > f0 + c1 * t * g0 or (n > 1 and f >= f_prev):
            res = zoom(t_prev, f_prev, g_prev, t, f, g)
            break
        if abs(g) <= -c2 * g0:
            return t
        if g >= 0:
            res = zoom(t, f, g, t_prev, f_prev, g_prev)
            break
        t_prev, f_prev, g_prev = t, f, g
        t = min(2.0 * t, t_max)
    else:
        res = None
    if res is not None:
        return res
    if best is not None:
        return best[0]
    raise LineSearchError("no step with sufficient decrease")


def lbfgs_minimize(fun, x0, gtol=1e-4, max_iter=100, memory=10, recoverable=(),
                   callback=None, max_step=None, c1=1e-4, c2=0.9, gamma0=None):
    """Minimise ``fun`` from ``x0``; stop on ``max|grad| <= gtol``, ``max_iter`` or a stall.

    ``fun`` returns ``(f, grad)`` or ``(f, grad, payload)``; the payload of
    the accepted point is kept on the result.  ``max_step`` caps the sup-norm
    of the first trial step of each line search.  ``c1``/``c2`` are the
    Wolfe constants; a small ``c2`` makes the line search nearly exact, which
    gives finite termination on quadratics.  ``gamma0`` seeds the initial
    inverse-Hessian scale (e.g. the ``gamma`` of a previous run on a nearby
    objective); without it the first direction is the sup-normalised gradient.
    """
    x = np.array(x0, dtype=float)
    out = fun(x)
    f, g = float(out[0]), np.asarray(out[1], dtype=float)
    payload = out[2] if len(out) > 2 else None
    if not np.isfinite(f):
        raise DivergenceError("objective is not finite at the starting point")
    pairs = deque(maxlen=memory)
    f_trace, g_trace = [f], [float(np.max(np.abs(g)))]
    n_eval, status, it = 1, MAX_ITER, 0
    gamma = gamma0
    for it in range(1, max_iter + 1):
        if g_trace[-1] <= gtol:
            status, it = CONVERGED, it - 1
            break
        if gamma is None:
            d = -g / max(1.0, float(np.max(np.abs(g))))
        else:
            d = -two_loop(g, list(pairs), gamma)
        slope = float(g @ d)
        if slope >= 0:
            pairs.clear()
            gamma = None
            d = -g / max(1.0, float(np.max(np.abs(g))))
            slope = float(g @ d)
        t_init = 1.0
        if max_step is not None:
            t_init = min(1.0, max_step / max(float(np.max(np.abs(d))), 1e-300))
        phi = _Phi(fun, x, d, recoverable)
        try:
            t = wolfe_search(phi, f, slope, t_init, c1=c1, c2=c2)
        except LineSearchError as exc:
            n_eval += phi.n_eval
            log.info("line search stalled at iteration %d: %s", it, exc)
            status, it = STALLED, it - 1
            break
        n_eval += phi.n_eval
        if t in phi.last:
            f_new, g_new, payload_new = phi.last[t]
        else:
            out = fun(x + t * d)
            n_eval += 1
            f_new, g_new = float(out[0]), np.asarray(out[1], dtype=float)
            payload_new = out[2] if len(out) > 2 else None
        if not np.isfinite(f_new):
            raise DivergenceError(f"objective became non-finite at iteration {it}",
                                  list(zip(f_trace, g_trace)))
        s = t * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
            gamma = sy / float(y @ y)
        x, f, g, payload = x + s, f_new, g_new, payload_new
        f_trace.append(f)
        g_trace.append(float(np.max(np.abs(g))))
        log.debug("iteration %d: f=%.12g max|g|=%.3e step=%.3e evals=%d",
                  it, f, g_trace[-1], t, phi.n_eval)
        if callback is not None:
            callback(it, x, f, g)
        if g_trace[-1] <= gtol:
            status = CONVERGED
            break
        if abs(f_trace[-2] - f) <= 1e-15 * max(1.0, abs(f)) and np.max(np.abs(s)) <= 1e-14:
            status = STALLED
            break
    return LbfgsResult(x=x, f=f, grad=g, n_iter=it, n_eval=n_eval, status=status,
                       f_trace=f_trace, gmax_trace=g_trace, payload=payload, gamma=gamma)
