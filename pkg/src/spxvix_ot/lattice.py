"""Time/space discretization shared by the HJB, pricing and simulation code.

The second state coordinate is carried on the grid in scaled form
``y2 = K * x2``; every field stored on a :class:`SpatialGrid` is indexed
``[i, j]`` with ``i`` along log-price and ``j`` along the scaled variance
budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DAYS_PER_YEAR = 365.0


class GridError(ValueError):
    """Raised for inconsistent grid construction or out-of-domain queries."""


def days(n):
    """Convert a day count to years (ACT/365)."""
    return n / DAYS_PER_YEAR


@dataclass(frozen=True)
class TimeGrid:
    nodes: np.ndarray
    event_times: tuple
    step_target: float

    @property
    def horizon(self):
        return float(self.nodes[-1])

    @property
    def n_steps(self):
        return len(self.nodes) - 1

    def index(self, t, tol=1e-12):
        """Index of the node equal to ``t``; raises if ``t`` is not a node."""
        k = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[k] - t) > tol * max(1.0, abs(t)):
            raise GridError(f"time {t!r} is not a grid node")
        return k

    def is_node(self, t):
        try:
            self.index(t)
        except GridError:
            return False
        return True


def build_time_grid(horizon, step_target, event_times=()):
    """Uniform-per-segment time grid with every event time on a node.

    Segments between consecutive event times are split into the smallest
    number of equal steps not exceeding ``step_target``.
    """
    if horizon <= 0 or step_target <= 0:
        raise GridError("horizon and step_target must be positive")
    events = sorted(set(float(t) for t in event_times))
    for t in events:
        if t <= 0 or t > horizon * (1 + 1e-14):
            raise GridError(f"event time {t} outside (0, {horizon}]")
    breaks = [0.0] + [t for t in events if t < horizon] + [float(horizon)]
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / step_target - 1e-9))
        seg = np.linspace(a, b, n + 1)
        pieces.append(seg if not pieces else seg[1:])
    nodes = np.concatenate(pieces)
    # linspace endpoints are exact, so events land on nodes bit-for-bit
    nodes[-1] = horizon
    return TimeGrid(nodes=nodes, event_times=tuple(events), step_target=float(step_target))


def scale_x2(x2, k):
    if k <= 1:
        raise GridError("scale factor must exceed 1")
    return np.multiply(x2, k)


def unscale_x2(y2, k):
    if k <= 1:
        raise GridError("scale factor must exceed 1")
    return np.divide(y2, k)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform (x1, K*x2) grid with an optional refined x2 axis near maturity.

    Time intervals ``k >= phase_switch_index`` use ``x2_nodes_fine``; earlier
    intervals use ``x2_nodes``.  Both x2 axes start at 0 and share endpoints,
    and the fine axis contains every coarse node.
    """

    x1_nodes: np.ndarray
    x2_nodes: np.ndarray
    scale_k: float
    phase_switch_index: int
    x2_nodes_fine: np.ndarray
    origin_index: tuple = field(default=(0, 0))
    refine_factor: int = 1

    @property
    def h1(self):
        return float(self.x1_nodes[1] - self.x1_nodes[0])

    @property
    def shape(self):
        return (len(self.x1_nodes), len(self.x2_nodes))

    @property
    def shape_fine(self):
        return (len(self.x1_nodes), len(self.x2_nodes_fine))

    def x2_axis(self, interval):
        """Scaled x2 nodes used on time interval ``interval``."""
        return self.x2_nodes_fine if self.is_fine(interval) else self.x2_nodes

    def is_fine(self, interval):
        return interval >= self.phase_switch_index

    def origin(self, fine=False):
        i0, j0 = self.origin_index
        return (i0, j0 * self.refine_factor) if fine else (i0, j0)

    def to_dict(self):
        return {
            "x1_min": float(self.x1_nodes[0]),
            "x1_max": float(self.x1_nodes[-1]),
            "n_x1": len(self.x1_nodes),
            "x2_max_scaled": float(self.x2_nodes[-1]),
            "n_x2": len(self.x2_nodes),
            "n_x2_fine": len(self.x2_nodes_fine),
            "scale_k": self.scale_k,
            "phase_switch_index": self.phase_switch_index,
            "origin_index": list(self.origin_index),
        }


def build_spatial_grid(x0, horizon, n_x1=50, n_x2=50, scale_k=40.0, x1_width_sd=5.0,
                       x2_max_mult=4.0, refine_factor=4, refine_steps=10, n_steps=None):
    """Grid centred so that ``(X1_0, K*X2_0)`` is a node.

    The x1 half-width is ``x1_width_sd * sqrt(2*X2_0)`` (``sigma_ref*sqrt(T)``
    with ``sigma_ref = sqrt(2*X2_0/T)``) and the scaled x2 axis spans
    ``[0, x2_max_mult*K*X2_0]``.
    """
    x1_0, x2_0 = float(x0[0]), float(x0[1])
    if x2_0 <= 0:
        raise GridError("X2_0 must be positive")
    if n_x1 < 5 or n_x2 < 5:
        raise GridError("need at least 5 nodes per axis")
    if scale_k <= 1:
        raise GridError("scale factor must exceed 1")
    half_width = x1_width_sd * math.sqrt(2.0 * x2_0)
    h1 = 2.0 * half_width / (n_x1 - 1)
    i0 = (n_x1 - 1) // 2
    x1 = x1_0 + h1 * (np.arange(n_x1) - i0)
    x1[i0] = x1_0

    y2_0 = scale_k * x2_0
    j0 = max(1, int(round((n_x2 - 1) / x2_max_mult)))
    h2 = y2_0 / j0
    x2 = h2 * np.arange(n_x2)
    x2[j0] = y2_0

    refine_factor = int(refine_factor)
    if refine_factor < 1:
        raise GridError("refine_factor must be >= 1")
    if refine_factor == 1 or refine_steps <= 0 or n_steps is None:
        fine = x2.copy()
        switch = n_steps if n_steps is not None else 0
        refine_factor = 1
    else:
        fine = (h2 / refine_factor) * np.arange((n_x2 - 1) * refine_factor + 1)
        fine[::refine_factor] = x2
        switch = max(0, n_steps - refine_steps)
    return SpatialGrid(x1_nodes=x1, x2_nodes=x2, scale_k=float(scale_k),
                       phase_switch_index=int(switch), x2_nodes_fine=fine,
                       origin_index=(i0, j0), refine_factor=refine_factor)


@dataclass(frozen=True)
class Lattice:
    time: TimeGrid
    space: SpatialGrid

    def interval_axes(self, k):
        return self.space.x1_nodes, self.space.x2_axis(k)

    def node_is_fine(self, k):
        """Node slices live on the grid of the interval that starts there."""
        return self.space.is_fine(min(k, self.time.n_steps - 1))


@dataclass
class GridField:
    values: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.x1), len(self.x2)):
            raise GridError(
                f"field shape {self.values.shape} does not match grid {(len(self.x1), len(self.x2))}")


def _locate(nodes, x):
    h = nodes[1] - nodes[0]
    s = (np.asarray(x, dtype=float) - nodes[0]) / h
    i = np.clip(np.floor(s).astype(int), 0, len(nodes) - 2)
    return i, s - i


def interpolate_bilinear(field, point):
    """Bilinear interpolation of a :class:`GridField` at ``(x1, x2)``."""
    p1, p2 = float(point[0]), float(point[1])
    x1, x2 = field.x1, field.x2
    eps1 = 1e-12 * max(1.0, abs(x1[-1]))
    eps2 = 1e-12 * max(1.0, abs(x2[-1]))
    if not (x1[0] - eps1 <= p1 <= x1[-1] + eps1 and x2[0] - eps2 <= p2 <= x2[-1] + eps2):
        raise GridError(f"point {point} outside grid box")
    i, u = _locate(x1, p1)
    j, v = _locate(x2, p2)
    f = field.values
    return float((1 - u) * (1 - v) * f[i, j] + u * (1 - v) * f[i + 1, j]
                 + (1 - u) * v * f[i, j + 1] + u * v * f[i + 1, j + 1])


def interpolate_many(values, x1, x2, p1, p2):
    """Vectorised bilinear interpolation with clamping to the grid box."""
    p1 = np.clip(p1, x1[0], x1[-1])
    p2 = np.clip(p2, x2[0], x2[-1])
    i, u = _locate(x1, p1)
    j, v = _locate(x2, p2)
    return ((1 - u) * (1 - v) * values[..., i, j] + u * (1 - v) * values[..., i + 1, j]
            + (1 - u) * v * values[..., i, j + 1] + u * v * values[..., i + 1, j + 1])


def regrid_weights(src, dst):
    """Index/weight pair for linear interpolation from axis ``src`` to ``dst``."""
    if abs(src[0] - dst[0]) > 1e-12 or abs(src[-1] - dst[-1]) > 1e-12 * max(1.0, abs(src[-1])):
        raise GridError("x2 axes must share endpoints")
    j = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, len(src) - 2)
    w = np.clip((dst - src[j]) / (src[j + 1] - src[j]), 0.0, 1.0)
    return j, w


def regrid_array(values, src, dst):
    """Linear regrid along the last axis (x2) of ``values``."""
    if len(src) == len(dst) and np.array_equal(src, dst):
        return values
    j, w = regrid_weights(src, dst)
    # (1-w)*lo + w*hi keeps shared nodes bit-exact
    return (1.0 - w) * np.take(values, j, axis=-1) + w * np.take(values, j + 1, axis=-1)


def regrid(field, target):
    """Move a :class:`GridField` onto another grid phase.

    ``target`` is either a ``GridField`` or an ``(x1, x2)`` pair; the x1
    nodes must match those of ``field``.
    """
    x1, target_x2 = (target.x1, target.x2) if isinstance(target, GridField) else target
    if len(x1) != len(field.x1) or not np.allclose(x1, field.x1, rtol=0, atol=1e-12):
        raise GridError("x1 axes differ")
    target_x2 = np.asarray(target_x2, dtype=float)
    return GridField(regrid_array(field.values, field.x2, target_x2), field.x1, target_x2)
