"""Dual calibration loop: objective, gradients, L-BFGS ascent and reference rounds.

The dual objective of the multipliers is

    L(lambda) = sum_i lambda_i u_i / w_i - phi(0, X0),

concave in lambda, with gradient ``u_i / w_i - E[payoff_i] / w_i`` under the
optimal characteristics of the HJB.  Between rounds the reference diffusion
is replaced by a de-spiked, smoothed copy of the latest optimal diffusion.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .conjugate import Sym2, psd_project_oracle
from .hjb import DEFAULT_EPS2, MAX_POLICY_ITER, HjbError, solve_hjb_backward
from .lbfgs import CONVERGED, STALLED, DivergenceError, lbfgs_minimize
from .pricing import PricingError, model_prices, scaled_model_prices
from .problem import Multipliers
from .surfaces import DiffusionSurface, from_scaled, to_scaled

log = logging.getLogger(__name__)

NOT_CONVERGED = "not_converged"


class CalibrationError(RuntimeError):
    pass


@dataclass
class CalibrationConfig:
    eps1: float = 1e-4
    eps2: float = DEFAULT_EPS2
    max_outer_iters: int = 200
    lbfgs_memory: int = 10
    smoothing_bandwidths: tuple = (3, 5, 5)
    despike_epsilon: float | None = None
    inner_early_stop: int = 5
    max_rounds: int = 20
    reference_tol: float = 1e-3
    max_policy_iter: int = MAX_POLICY_ITER
    max_step: float | None = 1.0
    wolfe_c2: float = 0.9
    pricing_method: str = "implicit"

    def __post_init__(self):
        self.smoothing_bandwidths = tuple(int(b) for b in self.smoothing_bandwidths)
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("eps1 and eps2 must be positive")
        if any(b < 1 or b % 2 == 0 for b in self.smoothing_bandwidths) or \
                len(self.smoothing_bandwidths) != 3:
            raise ValueError("smoothing bandwidths must be three odd positive integers")
        if self.inner_early_stop < 1 or self.max_rounds < 1 or self.max_outer_iters < 1:
            raise ValueError("iteration counts must be at least 1")
        if self.lbfgs_memory < 1:
            raise ValueError("lbfgs_memory must be at least 1")
        if self.despike_epsilon is not None and self.despike_epsilon < 0:
            raise ValueError("despike_epsilon must be nonnegative")

    def to_dict(self):
        d = asdict(self)
        d["smoothing_bandwidths"] = list(self.smoothing_bandwidths)
        return d


@dataclass
class CalibrationReport:
    multipliers: Multipliers
    status: str
    objective_trace: list
    gradient_trace: list
    quotes: list
    beta_star: DiffusionSurface
    beta_bar: DiffusionSurface
    rounds: int
    reference_changes: list
    fixed_point_gaps: list
    inner_iterations: list
    gradient: np.ndarray
    wall_time: float
    messages: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status != NOT_CONVERGED

    @property
    def max_gradient(self):
        return float(np.max(np.abs(self.gradient)))

    def to_dict(self):
        return {
            "status": self.status,
            "rounds": self.rounds,
            "wall_time_s": self.wall_time,
            "max_gradient": self.max_gradient,
            "multipliers": [float(v) for v in self.multipliers.to_flat()],
            "gradient": [float(v) for v in self.gradient],
            "objective_trace": [float(v) for v in self.objective_trace],
            "gradient_trace": [float(v) for v in self.gradient_trace],
            "reference_changes": [float(v) for v in self.reference_changes],
            "fixed_point_gaps": [float(v) for v in self.fixed_point_gaps],
            "inner_iterations": list(self.inner_iterations),
            "quotes": [quote_record(q) for q in self.quotes],
            "messages": list(self.messages),
        }


def quote_record(q):
    return {
        "instrument": q.label, "kind": q.kind.value, "maturity_days": q.maturity * 365.0,
        "strike": q.strike, "market_price": q.market_price, "model_price": q.model_price,
        "error": q.error, "market_iv": q.market_iv, "model_iv": q.model_iv,
        "iv_error": q.iv_error, "vega_weight": q.vega_weight,
    }


def dual_objective(multipliers, beta_bar, problem, eps2=DEFAULT_EPS2,
                   max_policy_iter=MAX_POLICY_ITER):
    """``(L, hjb)`` for a flat multiplier vector (or :class:`Multipliers`)."""
    lam = multipliers.to_flat() if isinstance(multipliers, Multipliers) else np.asarray(multipliers, float)
    hjb = solve_hjb_backward(lam, beta_bar, problem, eps2=eps2, max_policy_iter=max_policy_iter)
    value = float(lam @ problem.scaled_market_prices) - hjb.phi_at_origin
    return value, hjb


def gradients(multipliers, hjb, problem, method="implicit"):
    """Vega-scaled market minus model price for every instrument."""
    model = scaled_model_prices(hjb.beta_star, problem, method)
    return problem.scaled_market_prices - model


class DualEvaluator:
    """Objective/gradient oracle for L-BFGS on ``-L``; remembers every evaluation."""

    def __init__(self, problem, beta_bar, config):
        self.problem = problem
        self.beta_bar = beta_bar
        self.config = config
        self.n_eval = 0

    def __call__(self, lam):
        self.n_eval += 1
        value, hjb = dual_objective(lam, self.beta_bar, self.problem, self.config.eps2,
                                    self.config.max_policy_iter)
        grad = gradients(lam, hjb, self.problem, self.config.pricing_method)
        log.debug("eval %d: L=%.10g max|g|=%.3e", self.n_eval, value, np.max(np.abs(grad)))
        return -value, -grad, hjb


def lbfgs_maximize(start, problem, config, beta_bar=None, objective=None, max_iter=None,
                   gamma0=None):
    """Ascend L from ``start``; returns the L-BFGS result with ``x`` the multipliers.

    ``objective`` replaces the HJB-based oracle (test seam); it must return
    ``(L, grad)`` or ``(L, grad, payload)`` to be maximised.
    """
    if objective is None:
        if beta_bar is None:
            raise ValueError("beta_bar is required with the default objective")
        fun = DualEvaluator(problem, beta_bar, config)
    else:
        def fun(x):
            out = objective(x)
            return (-out[0], -np.asarray(out[1]), *out[2:])
    x0 = start.to_flat() if isinstance(start, Multipliers) else np.asarray(start, float)
    res = lbfgs_minimize(fun, x0, gtol=config.eps1, memory=config.lbfgs_memory,
                         max_iter=config.max_outer_iters if max_iter is None else max_iter,
                         recoverable=(HjbError, PricingError), max_step=config.max_step,
                         c2=config.wolfe_c2, gamma0=gamma0)
    res.f = -res.f
    res.grad = -res.grad
    res.f_trace = [-v for v in res.f_trace]
    return res


def _window_mean(values, width, axis):
    if width <= 1:
        return values
    num = uniform_filter1d(values, width, axis=axis, mode="constant", cval=0.0)
    den = uniform_filter1d(np.ones_like(values), width, axis=axis, mode="constant", cval=0.0)
    return num / den


def _project(stack, scale_k):
    """Eigen-clip onto the PSD cone in scaled coordinates."""
    st = to_scaled(stack, scale_k)
    s = psd_project_oracle(Sym2(st[..., 0, :, :], st[..., 1, :, :], st[..., 2, :, :]))
    return from_scaled(np.stack([s.e11, s.e12, s.e22], axis=-3), scale_k)


def smooth_beta(beta, bandwidths=(3, 5, 5), project=True):
    """Centred moving average over (t, x1, x2) with edge-truncated windows.

    Time averaging runs within each grid phase so every window mixes slices
    on the same x2 axis.  The result is re-projected onto the PSD cone.
    """
    lt, l1, l2 = (int(b) for b in bandwidths)
    if any(b < 1 or b % 2 == 0 for b in (lt, l1, l2)):
        raise ValueError("bandwidths must be odd positive integers")
    out = list(beta.slices)
    for rng in beta.phase_ranges():
        block = np.stack([beta.slices[k] for k in rng])  # (nt, 3, n1, n2)
        block = _window_mean(block, lt, 0)
        block = _window_mean(block, l1, 2)
        block = _window_mean(block, l2, 3)
        if project:
            block = _project(block, beta.lattice.space.scale_k)
        for k, s in zip(rng, block):
            out[k] = s
    return DiffusionSurface(beta.lattice, out)


def despike_near_zero(beta, epsilon, project=True):
    """Replace values at scaled ``x2 < epsilon`` by the linear extrapolation
    through the first two nodes at or above ``epsilon``."""
    if epsilon is None or epsilon <= 0:
        return beta.copy()
    out = []
    for k, s in enumerate(beta.slices):
        y2 = beta.lattice.space.x2_axis(k)
        low = np.flatnonzero(y2 < epsilon)
        above = np.flatnonzero(y2 >= epsilon)
        if len(above) < 2:
            raise ValueError(f"fewer than two x2 nodes above epsilon={epsilon}")
        s = s.copy()
        if len(low):
            j1, j2 = above[0], above[1]
            w = (y2[low] - y2[j1]) / (y2[j2] - y2[j1])
            s[..., low] = s[..., j1, None] + (s[..., j2, None] - s[..., j1, None]) * w
            if project:
                s = _project(s, beta.lattice.space.scale_k)
        out.append(s)
    return DiffusionSurface(beta.lattice, out)


def default_despike_epsilon(lattice):
    """Two coarse x2 cells, in scaled units."""
    x2 = lattice.space.x2_nodes
    return 2.0 * float(x2[1] - x2[0])


def next_reference(beta_star, config):
    eps = config.despike_epsilon
    if eps is None:
        eps = default_despike_epsilon(beta_star.lattice)
    return smooth_beta(despike_near_zero(beta_star, eps), config.smoothing_bandwidths)


def reference_measure_iteration(problem, initial_reference, config=None, start=None,
                                progress=None):
    """Rounds of early-stopped ascent and reference re-seeding, then a full solve.

    Rounds stop once the smoothed reference moves less than
    ``config.reference_tol`` in sup-norm, once the optimal diffusion already
    equals the reference to that tolerance, or after ``config.max_rounds``.
    The last round runs the inner loop to ``eps1``.
    """
    config = config or CalibrationConfig()
    t_start = time.perf_counter()
    beta_bar = initial_reference
    lam = Multipliers.zeros(problem).to_flat() if start is None else (
        start.to_flat() if isinstance(start, Multipliers) else np.asarray(start, float))
    f_trace, g_trace, changes, gaps, inner = [], [], [], [], []
    messages = []
    gamma = None

    def run(max_iter):
        nonlocal lam, gamma
        try:
            # the curvature scale carries over: consecutive references give nearby objectives
            res = lbfgs_maximize(lam, problem, config, beta_bar=beta_bar, max_iter=max_iter,
                                 gamma0=gamma)
        except (HjbError, PricingError) as exc:
            raise CalibrationError(f"HJB/pricing failed at the current multipliers: {exc}") from exc
        except DivergenceError as exc:
            raise CalibrationError(str(exc)) from exc
        lam = res.x
        gamma = res.gamma
        f_trace.extend(res.f_trace)
        g_trace.extend(res.gmax_trace)
        inner.append(res.n_iter)
        return res

    rounds = 0
    res = None
    for rnd in range(config.max_rounds - 1):
        rounds += 1
        res = run(config.inner_early_stop)
        beta_star = res.payload.beta_star
        gap = beta_star.max_abs_diff(beta_bar)
        new_bar = next_reference(beta_star, config)
        change = new_bar.max_abs_diff(beta_bar)
        gaps.append(gap)
        changes.append(change)
        if progress:
            progress(f"round {rounds}: L={res.f:.8g} max|g|={res.gmax:.2e} "
                     f"|beta*-ref|={gap:.2e} |ref change|={change:.2e}")
        if gap < config.reference_tol:
            break
        beta_bar = new_bar
        if change < config.reference_tol:
            break

    rounds += 1
    res = run(config.max_outer_iters)
    if progress:
        progress(f"final round: L={res.f:.8g} max|g|={res.gmax:.2e} status={res.status}")
    if res.gmax <= config.eps1:
        status = CONVERGED
    elif res.gmax <= 10 * config.eps1:
        status = STALLED
        messages.append("inner loop stopped above eps1 but within 10*eps1")
    else:
        status = NOT_CONVERGED
        messages.append("inner loop did not reach the gradient tolerance; "
                        "the quotes may be inadmissible for this model")
    hjb = res.payload
    quotes = model_prices(hjb.beta_star, problem, config.pricing_method)
    return CalibrationReport(
        multipliers=Multipliers.from_flat(lam, problem), status=status,
        objective_trace=f_trace, gradient_trace=g_trace, quotes=quotes,
        beta_star=hjb.beta_star, beta_bar=beta_bar, rounds=rounds, reference_changes=changes,
        fixed_point_gaps=gaps, inner_iterations=inner, gradient=res.grad,
        wall_time=time.perf_counter() - t_start, messages=messages)
