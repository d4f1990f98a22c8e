"""Calibration problem: instruments on a lattice, plus the dual variables."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice, build_spatial_grid, build_time_grid, days
from .payoffs import Instrument, InstrumentKind, VixSpec, check_maturity, payoff_on_grid, singular_contract

_KIND_ORDER = {
    InstrumentKind.SPX_CALL: 0, InstrumentKind.SPX_PUT: 0,
    InstrumentKind.VIX_FUTURE: 1,
    InstrumentKind.VIX_CALL: 2, InstrumentKind.VIX_PUT: 2,
    InstrumentKind.SINGULAR: 3,
}


@dataclass
class GridConfig:
    n_x1: int = 50
    n_x2: int = 50
    dt_days: float = 1.0
    scale_k: float = 40.0
    x1_width_sd: float = 5.0
    x2_max_mult: float = 4.0
    refine_factor: int = 4
    refine_steps: int = 10

    def __post_init__(self):
        if self.n_x1 < 5 or self.n_x2 < 5:
            raise ValueError("grid needs at least 5 nodes per axis")
        if self.dt_days <= 0:
            raise ValueError("dt_days must be positive")
        if self.scale_k <= 1:
            raise ValueError("scale_k must exceed 1")


def canonical_order(instruments):
    """SPX (input order), VIX future, VIX options (input order), singular."""
    return sorted(instruments, key=lambda ins: _KIND_ORDER[ins.kind])


def build_lattice(spec, x0, event_times, grid=None):
    grid = grid or GridConfig()
    time = build_time_grid(spec.big_t, days(grid.dt_days), set(event_times) | {spec.t0, spec.big_t})
    space = build_spatial_grid(x0, spec.big_t, n_x1=grid.n_x1, n_x2=grid.n_x2,
                               scale_k=grid.scale_k, x1_width_sd=grid.x1_width_sd,
                               x2_max_mult=grid.x2_max_mult, refine_factor=grid.refine_factor,
                               refine_steps=grid.refine_steps, n_steps=time.n_steps)
    return Lattice(time=time, space=space)


@dataclass
class CalibrationProblem:
    """Instruments (vega weights attached), VIX window, initial state and lattice.

    Instruments are kept in canonical multiplier order and always end with
    the singular contract.
    """

    instruments: tuple
    spec: VixSpec
    x0: tuple
    lattice: Lattice
    _payoff_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        instruments = [i for i in self.instruments if i.kind is not InstrumentKind.SINGULAR]
        instruments = canonical_order(instruments) + [singular_contract(self.spec)]
        self.instruments = tuple(instruments)
        for ins in self.instruments:
            check_maturity(ins, self.spec)
        seen = set()
        for ins in self.instruments:
            key = (ins.kind, ins.strike, round(ins.maturity * 365 * 1e6))
            if key in seen:
                raise ValueError(f"duplicate instrument {ins.label}")
            seen.add(key)
        self.maturity_index = np.array([self.lattice.time.index(i.maturity)
                                        for i in self.instruments])
        self.x0 = (float(self.x0[0]), float(self.x0[1]))
        self.check_origin()

    @classmethod
    def build(cls, instruments, spec, x0, grid=None):
        events = {i.maturity for i in instruments} | {spec.t0, spec.big_t}
        return cls(tuple(instruments), spec, x0, build_lattice(spec, x0, events, grid))

    def check_origin(self):
        sp = self.lattice.space
        i0, j0 = sp.origin_index
        if abs(sp.x1_nodes[i0] - self.x0[0]) > 1e-12 or \
                abs(sp.x2_nodes[j0] - sp.scale_k * self.x0[1]) > 1e-12:
            raise ValueError("X0 is not a node of the lattice")

    @property
    def size(self):
        return len(self.instruments)

    @property
    def weights(self):
        return np.array([i.vega_weight for i in self.instruments])

    @property
    def market_prices(self):
        return np.array([i.market_price for i in self.instruments])

    @property
    def scaled_market_prices(self):
        return self.market_prices / self.weights

    @property
    def event_nodes(self):
        return sorted(set(int(k) for k in self.maturity_index))

    def instruments_at(self, node):
        return [n for n, k in enumerate(self.maturity_index) if k == node]

    def scaled_payoff(self, n, fine):
        """Payoff of instrument ``n`` divided by its vega weight, on a grid phase."""
        key = (n, bool(fine))
        if key not in self._payoff_cache:
            sp = self.lattice.space
            y2 = sp.x2_nodes_fine if fine else sp.x2_nodes
            ins = self.instruments[n]
            self._payoff_cache[key] = payoff_on_grid(ins, self.spec, sp.x1_nodes, y2,
                                                     sp.scale_k) / ins.vega_weight
        return self._payoff_cache[key]

    def with_instruments(self, instruments):
        """Same lattice, new instruments (maturities must already be nodes)."""
        return CalibrationProblem(tuple(instruments), self.spec, self.x0, self.lattice)


@dataclass
class Multipliers:
    lambda_spx: np.ndarray
    lambda_vix_f: float
    lambda_vix: np.ndarray
    lambda_xi: float
    has_future: bool = True

    def to_flat(self):
        fut = [self.lambda_vix_f] if self.has_future else []
        return np.concatenate([np.asarray(self.lambda_spx, float), fut,
                               np.asarray(self.lambda_vix, float), [self.lambda_xi]])

    @classmethod
    def from_flat(cls, flat, problem):
        """Split a flat vector laid out in the problem's instrument order.

        A problem without a VIX future carries ``lambda_vix_f = 0`` and has no
        slot for it in the flat vector.
        """
        flat = np.asarray(flat, dtype=float)
        if len(flat) != problem.size:
            raise ValueError(f"expected {problem.size} multipliers, got {len(flat)}")
        kinds = [i.kind for i in problem.instruments]
        spx = np.array([v for v, k in zip(flat, kinds) if k.is_spx])
        vix = np.array([v for v, k in zip(flat, kinds) if k.is_vix_option])
        fut = [v for v, k in zip(flat, kinds) if k is InstrumentKind.VIX_FUTURE]
        return cls(spx, float(fut[0]) if fut else 0.0, vix, float(flat[-1]), bool(fut))

    @classmethod
    def zeros(cls, problem):
        return cls.from_flat(np.zeros(problem.size), problem)
