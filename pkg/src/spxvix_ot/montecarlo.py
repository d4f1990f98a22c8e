"""Euler simulation of (X1, X2) under a diffusion surface or Heston characteristics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .conjugate import Sym2, min_eigenvalue, psd_project_oracle
from .heston import HestonParams, heston_characteristics
from .lattice import interpolate_many
from .payoffs import vix_of_x2
from .surfaces import DiffusionSurface


@dataclass
class PathBatch:
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    seed: int
    snapshots: dict = field(default_factory=dict)
    trajectories: tuple | None = None

    @property
    def n_paths(self):
        return len(self.x1)


def _cholesky_2x2(b11, b12, b22):
    """Lower Cholesky factor of PSD 2x2 matrices; eigen-clips any that are not."""
    bad = min_eigenvalue(b11, b12, b22) < 0
    if np.any(bad):
        fixed = psd_project_oracle(Sym2(b11[bad], b12[bad], b22[bad]))
        b11, b12, b22 = b11.copy(), b12.copy(), b22.copy()
        b11[bad], b12[bad], b22[bad] = fixed.e11, fixed.e12, fixed.e22
    l11 = np.sqrt(np.maximum(b11, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(l11 > 0, b12 / np.where(l11 > 0, l11, 1.0), 0.0)
    l22 = np.sqrt(np.maximum(b22 - l21 * l21, 0.0))
    return l11, l21, l22


def _surface_beta(surface, k, p1, p2):
    sp = surface.lattice.space
    values = surface[k]
    x2_axis = sp.x2_axis(k) / sp.scale_k
    return interpolate_many(values, sp.x1_nodes, x2_axis, p1, p2)


def euler_simulate(source, x0, times, n_paths, seed=0, keep_paths=0, snapshot_times=()):
    """Simulate ``n_paths`` Euler paths on ``times``.

    ``source`` is a :class:`DiffusionSurface` (evaluated bilinearly with edge
    clamping on interval ``k``) or a ``(HestonParams, horizon)`` pair.  The
    drift is ``-beta11/2`` in both coordinates; ``x2`` is floored at 0.  The
    first ``keep_paths`` trajectories are stored in full.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    times = np.asarray(times, dtype=float)
    if isinstance(source, DiffusionSurface):
        if len(times) != source.lattice.time.n_steps + 1 or \
                not np.allclose(times, source.lattice.time.nodes, rtol=0, atol=1e-14):
            raise ValueError("times must be the surface's time nodes")

        def beta_at(k, p1, p2):
            return _surface_beta(source, k, p1, p2)
    else:
        params, horizon = source
        if not isinstance(params, HestonParams):
            params = HestonParams(*params)

        def beta_at(k, p1, p2):
            _, b = heston_characteristics(times[k], p2, params, horizon)
            return np.stack([np.broadcast_to(b.e11, p2.shape), np.broadcast_to(b.e12, p2.shape),
                             np.broadcast_to(b.e22, p2.shape)])

    rng = np.random.Generator(np.random.Philox(key=seed))
    x1 = np.full(n_paths, float(x0[0]))
    x2 = np.full(n_paths, float(x0[1]))
    snap_idx = {int(np.argmin(np.abs(times - t))): t for t in snapshot_times}
    snapshots = {}
    keep = min(int(keep_paths), n_paths)
    traj = (np.empty((len(times), keep)), np.empty((len(times), keep))) if keep else None
    if traj:
        traj[0][0], traj[1][0] = x1[:keep], x2[:keep]
    for k in range(len(times) - 1):
        if k in snap_idx:
            snapshots[snap_idx[k]] = (x1.copy(), x2.copy())
        dt = times[k + 1] - times[k]
        b = beta_at(k, x1, x2)
        l11, l21, l22 = _cholesky_2x2(np.asarray(b[0], float), np.asarray(b[1], float),
                                      np.asarray(b[2], float))
        z = rng.standard_normal((2, n_paths))
        sq = math.sqrt(dt)
        drift = -0.5 * b[0] * dt
        x1 = x1 + drift + sq * l11 * z[0]
        x2 = np.maximum(x2 + drift + sq * (l21 * z[0] + l22 * z[1]), 0.0)
        if traj:
            traj[0][k + 1], traj[1][k + 1] = x1[:keep], x2[:keep]
    last = len(times) - 1
    if last in snap_idx:
        snapshots[snap_idx[last]] = (x1.copy(), x2.copy())
    return PathBatch(times=times, x1=x1, x2=x2, seed=seed, snapshots=snapshots, trajectories=traj)


def terminal_diagnostics(batch, x0, spec=None):
    """Singular-contract mean, martingale check and X2_T quantiles."""
    xi = 1.0 - np.exp(-batch.x2**2)
    s = np.exp(batch.x1)
    n = batch.n_paths
    q = np.quantile(batch.x2, [0.5, 0.95, 0.99])
    out = {
        "n_paths": n,
        "seed": batch.seed,
        "mean_xi": float(xi.mean()),
        "stderr_xi": float(xi.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        "mean_x2_T": float(batch.x2.mean()),
        "x2_T_q50": float(q[0]),
        "x2_T_q95": float(q[1]),
        "x2_T_q99": float(q[2]),
        "mean_exp_x1_T": float(s.mean()),
        "stderr_exp_x1_T": float(s.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        "exp_x1_0": math.exp(x0[0]),
    }
    if spec is not None and spec.t0 in batch.snapshots:
        _, x2_t0 = batch.snapshots[spec.t0]
        out["mean_vix_t0"] = float(vix_of_x2(x2_t0, spec).mean())
    return out


def write_histograms(path, batch, bins=50):
    """Long-format histograms of X1 and X2 at every snapshot and at the horizon."""
    snaps = dict(batch.snapshots)
    snaps[float(batch.times[-1])] = (batch.x1, batch.x2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "variable", "bin_left", "bin_right", "count"])
        for t in sorted(snaps):
            for name, values in zip(("x1", "x2"), snaps[t]):
                counts, edges = np.histogram(values, bins=bins)
                for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                    w.writerow([repr(float(t)), name, repr(float(lo)), repr(float(hi)), int(c)])


def write_trajectories(path, batch):
    if batch.trajectories is None:
        raise ValueError("batch has no stored trajectories")
    x1, x2 = batch.trajectories
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "time_index", "t", "x1", "x2"])
        for p in range(x1.shape[1]):
            for k, t in enumerate(batch.times):
                w.writerow([p, k, repr(float(t)), repr(float(x1[k, p])), repr(float(x2[k, p]))])
