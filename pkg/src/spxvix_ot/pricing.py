"""Linear pricing PDE under frozen characteristics, plus a Heston Fourier oracle.

Model prices solve ``d_t u + L(beta) u = 0`` backward from each payoff date.
Two time discretisations are offered:

* ``"implicit"``: the fully implicit step of the HJB solver with ``beta``
  frozen, boundary data refreshed at every payoff date.  Prices computed this
  way are the exact derivatives of the discrete HJB value with respect to
  the multipliers, so they are used for gradients.
* ``"adi"``: Douglas splitting (theta = 1/2, cross term explicit) with the
  boundary data frozen to the payoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .black import (ImpliedVolError, black_price, black_scholes_price, black_scholes_vega,
                    black_vega, implied_vol, implied_vol_or_nan)
from .heston import HestonParams, variance_from_x2
from .lattice import GridError, regrid_array
from .payoffs import InstrumentKind, payoff_on_grid, vix_of_x2
from .stencil import RowScaledLU, plan_for

__all__ = [
    "PricingError", "PriceQuote", "backward_sweep", "solve_pricing_pde", "model_prices",
    "heston_cf_price", "heston_log_cf", "black_price", "black_vega", "implied_vol",
    "black_scholes_price", "black_scholes_vega", "ImpliedVolError",
]

METHODS = ("implicit", "adi")


class PricingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PriceQuote:
    label: str
    kind: InstrumentKind
    strike: float | None
    maturity: float
    market_price: float
    model_price: float
    vega_weight: float
    market_iv: float | None = None
    model_iv: float | None = None

    @property
    def error(self):
        return self.model_price - self.market_price

    @property
    def scaled_error(self):
        return self.error / self.vega_weight

    @property
    def iv_error(self):
        if self.market_iv is None or self.model_iv is None:
            return None
        return self.model_iv - self.market_iv


def _as_columns(values, size):
    return values.reshape(values.shape[0], size).T


def _step_implicit(plan, beta, scale_k, dt, cols, ref):
    n_cols = cols.shape[0]
    lu = RowScaledLU(plan.implicit_system(beta[0], beta[1], beta[2], scale_k, dt))
    rhs = plan.with_boundary(_as_columns(cols, plan.size), _as_columns(ref, plan.size))
    return lu.solve(rhs).T.reshape(n_cols, plan.n1, plan.n2)


def _step_adi(plan, beta, scale_k, dt, cols, ref, theta=0.5):
    """Douglas step: explicit predictor, then one implicit correction per direction."""
    n_cols = cols.shape[0]
    u = _as_columns(cols, plan.size)
    bc = _as_columns(ref, plan.size)
    full = plan.operator(beta[0], beta[1], beta[2], scale_k)
    y = u + dt * (full @ u)
    for part in ("x1", "x2"):
        lj = plan.operator(beta[0], beta[1], beta[2], scale_k, parts=(part,))
        lu = RowScaledLU(plan.implicit_system(beta[0], beta[1], beta[2], scale_k,
                                              theta * dt, parts=(part,)))
        y = lu.solve(plan.with_boundary(y - theta * dt * (lj @ u), bc))
    return y.T.reshape(n_cols, plan.n1, plan.n2)


def backward_sweep(beta, lattice, injections, method="implicit", refresh_nodes=None):
    """Price several payoffs in one backward pass.

    ``injections`` maps a time node to a list of ``(column, field_fn)``; the
    callable receives ``fine`` and returns the payoff on that grid phase.
    Returns the ``(n_cols, n1, n2)`` array at t = 0.  With the implicit method
    the boundary reference is reset to the current values at every node of
    ``refresh_nodes`` (default: the injection nodes); with ADI it stays equal
    to each column's payoff.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    sp = lattice.space
    n_steps = lattice.time.n_steps
    nodes = lattice.time.nodes
    n_cols = 1 + max((c for items in injections.values() for c, _ in items), default=-1)
    if n_cols == 0:
        raise PricingError("nothing to price")
    for k in injections:
        if not 0 < k <= n_steps:
            raise GridError(f"payoff node {k} outside (0, {n_steps}]")
    refresh = set(injections) if refresh_nodes is None else set(refresh_nodes)

    cols = np.zeros((n_cols, len(sp.x1_nodes), len(sp.x2_axis(n_steps - 1))))
    ref = np.zeros_like(cols)
    for k in range(n_steps, 0, -1):
        fine = lattice.node_is_fine(k)
        for c, field_fn in injections.get(k, ()):
            payoff = field_fn(fine)
            cols[c] += payoff
            if method == "adi":
                ref[c] = payoff
        if method == "implicit" and k in refresh:
            ref = cols.copy()
        y2 = sp.x2_axis(k - 1)
        if cols.shape[-1] != len(y2):
            src = sp.x2_axis(min(k, n_steps - 1))
            cols = regrid_array(cols, src, y2)
            ref = regrid_array(ref, src, y2)
        plan = plan_for(sp.x1_nodes, y2)
        step = _step_implicit if method == "implicit" else _step_adi
        cols = step(plan, beta[k - 1], sp.scale_k, nodes[k] - nodes[k - 1], cols, ref)
        if not np.all(np.isfinite(cols)):
            raise PricingError(f"non-finite prices at time index {k - 1}")
    return cols


def solve_pricing_pde(beta, payoff, maturity, lattice, method="adi"):
    """Value at t = 0 of ``payoff(x1, x2)`` paid at ``maturity``.

    ``payoff`` takes unscaled ``(x1, x2)`` arrays.  Returns the t = 0 slice;
    the price is the entry at the origin node.
    """
    k = lattice.time.index(maturity)
    sp = lattice.space

    def field_fn(fine):
        y2 = sp.x2_nodes_fine if fine else sp.x2_nodes
        x1g, x2g = np.meshgrid(sp.x1_nodes, y2 / sp.scale_k, indexing="ij")
        return np.broadcast_to(payoff(x1g, x2g), x1g.shape).astype(float)

    return backward_sweep(beta, lattice, {k: [(0, field_fn)]}, method=method)[0]


def price_at_origin(values, lattice):
    i0, j0 = lattice.space.origin(fine=lattice.node_is_fine(0))
    return values[..., i0, j0]


def scaled_model_prices(beta, problem, method="implicit", extra=()):
    """Model prices of every problem instrument in payoff / vega-weight units.

    ``extra`` is a list of ``(node, field_fn)`` priced alongside; their values
    are appended after the instruments.  With the implicit method the
    boundary reference is refreshed at every payoff date of the problem,
    mirroring the HJB sweep.
    """
    injections = {}
    for n, k in enumerate(problem.maturity_index):
        injections.setdefault(int(k), []).append(
            (n, lambda fine, n=n: problem.scaled_payoff(n, fine)))
    for m, (k, fn) in enumerate(extra):
        injections.setdefault(int(k), []).append((problem.size + m, fn))
    values = backward_sweep(beta, problem.lattice, injections, method=method,
                            refresh_nodes=problem.event_nodes)
    return price_at_origin(values, problem.lattice)


def model_prices(beta, problem, method="implicit"):
    """PriceQuote per instrument with implied vols.

    SPX options use Black-Scholes on the spot; VIX options use Black on the
    model's own VIX future.
    """
    sp = problem.lattice.space
    spec = problem.spec
    t0_node = problem.lattice.time.index(spec.t0)

    def vix_field(fine):
        y2 = sp.x2_nodes_fine if fine else sp.x2_nodes
        return np.broadcast_to(vix_of_x2(y2 / sp.scale_k, spec), (len(sp.x1_nodes), len(y2)))

    scaled = scaled_model_prices(beta, problem, method, extra=[(t0_node, vix_field)])
    vix_future = float(scaled[-1])
    forward = math.exp(problem.x0[0])
    quotes = []
    for ins, s in zip(problem.instruments, scaled[:problem.size]):
        price = float(s) * ins.vega_weight
        market_iv = model_iv = None
        if ins.kind.is_spx or ins.kind.is_vix_option:
            fwd = forward if ins.kind.is_spx else vix_future
            call = ins.kind in (InstrumentKind.SPX_CALL, InstrumentKind.VIX_CALL)
            model_iv = implied_vol_or_nan(price, fwd, ins.strike, ins.maturity, call=call)
            market_iv = ins.implied_vol
        quotes.append(PriceQuote(ins.label, ins.kind, ins.strike, ins.maturity,
                                 ins.market_price, price, ins.vega_weight, market_iv, model_iv))
    return quotes


def heston_log_cf(u, params, maturity, v0):
    """Characteristic function of ``log(S_T / F)`` under Heston (zero rates)."""
    kappa, theta, omega, rho = params.kappa, params.theta, params.omega, params.eta
    iu = 1j * u
    b = kappa - rho * omega * iu
    d = np.sqrt(b * b + omega**2 * (iu + u * u))
    g = (b - d) / (b + d)
    e = np.exp(-d * maturity)
    c = kappa * theta / omega**2 * ((b - d) * maturity - 2.0 * np.log((1.0 - g * e) / (1.0 - g)))
    dd = (b - d) / omega**2 * (1.0 - e) / (1.0 - g * e)
    return np.exp(c + dd * v0)


def heston_cf_price(params, forward, strike, maturity, v0=None, x2_0=None, horizon=None,
                    call=True, tol=1e-10):
    """European option price by single-integral Fourier inversion.

    Uses the damped integrand ``Re[exp(i u k) phi(u - i/2)] / (u^2 + 1/4)``
    with ``k = log(F/K)``.  The initial variance is ``v0`` or is derived from
    ``x2_0`` on the horizon ``horizon``.
    """
    if not isinstance(params, HestonParams):
        params = HestonParams(*params)
    if v0 is None:
        if x2_0 is None or horizon is None:
            raise ValueError("give v0, or x2_0 together with horizon")
        v0 = float(variance_from_x2(0.0, x2_0, params.kappa, params.theta, horizon))
    if forward <= 0 or strike <= 0 or maturity <= 0:
        raise ValueError("forward, strike and maturity must be positive")
    k = math.log(forward / strike)

    def integrand(u):
        return (np.exp(1j * u * k) * heston_log_cf(u - 0.5j, params, maturity, v0)).real / (u * u + 0.25)

    integral, err = quad(integrand, 0.0, np.inf, limit=500, epsabs=tol, epsrel=tol)
    if not np.isfinite(integral) or err > 1e-6 * max(1.0, abs(integral)):
        raise PricingError(f"Fourier integral did not converge (error estimate {err:.2e})")
    c = forward - math.sqrt(forward * strike) / math.pi * integral
    return c if call else c - forward + strike
