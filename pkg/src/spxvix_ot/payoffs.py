"""Calibration instruments and their payoffs on the (x1, x2) state."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .black import black_vega

VEGA_FLOOR = 0.01


class InstrumentKind(str, Enum):
    SPX_CALL = "spx_call"
    SPX_PUT = "spx_put"
    VIX_CALL = "vix_call"
    VIX_PUT = "vix_put"
    VIX_FUTURE = "vix_future"
    SINGULAR = "singular"

    @property
    def is_spx(self):
        return self in (InstrumentKind.SPX_CALL, InstrumentKind.SPX_PUT)

    @property
    def is_vix_option(self):
        return self in (InstrumentKind.VIX_CALL, InstrumentKind.VIX_PUT)


@dataclass(frozen=True)
class VixSpec:
    t0: float
    big_t: float

    def __post_init__(self):
        if not 0 < self.t0 < self.big_t:
            raise ValueError(f"need 0 < t0 < T, got t0={self.t0}, T={self.big_t}")

    @property
    def window(self):
        return self.big_t - self.t0


@dataclass(frozen=True)
class Instrument:
    kind: InstrumentKind
    maturity: float
    market_price: float
    strike: float | None = None
    vega_weight: float = 1.0
    implied_vol: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", InstrumentKind(self.kind))
        if self.market_price < 0:
            raise ValueError(f"negative market price for {self.label}")
        if self.vega_weight <= 0:
            raise ValueError("vega_weight must be positive")
        needs_strike = self.kind not in (InstrumentKind.VIX_FUTURE, InstrumentKind.SINGULAR)
        if needs_strike and (self.strike is None or self.strike <= 0):
            raise ValueError(f"{self.kind.value} needs a positive strike")
        if self.kind is InstrumentKind.SINGULAR and self.market_price != 0:
            raise ValueError("the singular contract is priced at 0")

    @property
    def label(self):
        k = "" if self.strike is None else f"_K{self.strike:g}"
        return f"{self.kind.value}_{self.maturity * 365:.6g}d{k}"

    @property
    def scaled_price(self):
        return self.market_price / self.vega_weight


def singular_contract(spec):
    return Instrument(InstrumentKind.SINGULAR, maturity=spec.big_t, market_price=0.0)


def check_maturity(instr, spec, tol=1e-12):
    """Enforce the maturity convention: SPX in (0, T], VIX at t0, singular at T."""
    k = instr.kind
    if k.is_spx:
        ok = 0 < instr.maturity <= spec.big_t + tol
    elif k is InstrumentKind.SINGULAR:
        ok = abs(instr.maturity - spec.big_t) <= tol
    else:
        ok = abs(instr.maturity - spec.t0) <= tol
    if not ok:
        raise ValueError(f"{instr.label}: maturity {instr.maturity} inconsistent with t0/T")


def vix_of_x2(x2, spec):
    """Model VIX ``J(x) = 100*sqrt(2*x2/(T - t0))``; tiny negative x2 is clipped."""
    return 100.0 * np.sqrt(2.0 * np.maximum(x2, 0.0) / spec.window)


def payoff_value(instr, spec, x1, x2):
    """Payoff of ``instr`` at states ``(x1, x2)`` (unscaled x2), broadcasting."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    k = instr.kind
    if k is InstrumentKind.SPX_CALL:
        out = np.maximum(np.exp(x1) - instr.strike, 0.0)
    elif k is InstrumentKind.SPX_PUT:
        out = np.maximum(instr.strike - np.exp(x1), 0.0)
    elif k is InstrumentKind.VIX_FUTURE:
        out = vix_of_x2(x2, spec)
    elif k is InstrumentKind.VIX_CALL:
        out = np.maximum(vix_of_x2(x2, spec) - instr.strike, 0.0)
    elif k is InstrumentKind.VIX_PUT:
        out = np.maximum(instr.strike - vix_of_x2(x2, spec), 0.0)
    else:
        out = 1.0 - np.exp(-np.maximum(x2, 0.0) ** 2)
    return np.broadcast_to(out, np.broadcast_shapes(x1.shape, x2.shape)).copy()


def payoff_on_grid(instr, spec, x1_nodes, y2_nodes, scale_k):
    """Payoff field on a grid whose second axis is the scaled coordinate K*x2."""
    return payoff_value(instr, spec, x1_nodes[:, None], y2_nodes[None, :] / scale_k)


def vega_scale(instr, implied_vol, forward, vix_future=None, vega_floor=VEGA_FLOOR):
    """Return ``instr`` with its vega weight set from the quote's implied vol.

    SPX options use Black-Scholes on the SPX forward; VIX options use Black on
    the VIX futures level.  Futures and the singular contract keep weight 1.
    """
    k = instr.kind
    if k in (InstrumentKind.VIX_FUTURE, InstrumentKind.SINGULAR):
        return replace(instr, vega_weight=1.0)
    if implied_vol is None or not implied_vol > 0 or not math.isfinite(implied_vol):
        raise ValueError(f"{instr.label}: implied vol must be positive, got {implied_vol}")
    if instr.maturity <= 0:
        raise ValueError("maturity must be positive")
    underlying = forward if k.is_spx else vix_future
    if underlying is None or underlying <= 0:
        raise ValueError(f"{instr.label}: missing underlying level for vega")
    vega = black_vega(underlying, instr.strike, implied_vol, instr.maturity)
    return replace(instr, vega_weight=max(vega, vega_floor), implied_vol=implied_vol)
