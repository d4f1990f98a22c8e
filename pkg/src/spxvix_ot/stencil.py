"""Central-difference 9-point stencils on the scaled (x1, K*x2) grid.

The generator discretised here is

    L phi = -b11/2 d1 phi - b11/2 d2 phi + b11/2 d11 phi + b12 d12 phi + b22/2 d22 phi

written in unscaled coordinates; on the grid the x2 derivatives pick up the
factors K, K and K^2.  Unknowns are flattened C-order, ``p = i*n2 + j``.

Boundary rows (identical for the HJB and the pricing equations):

* ``x2 = 0``: Dirichlet, ``phi = ref``;
* ``x1`` edges and the ``x2``-max edge: the one-sided second difference normal
  to the edge equals that of ``ref``.  The two top corners use the x1 rule.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu


def second_diff(f, h, axis):
    """Second derivative: central inside, second-order one-sided on the edges."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def derivatives(phi, h1, h2):
    """(d1, d2, d11, d12, d22) of ``phi`` in grid coordinates."""
    p1 = np.gradient(phi, h1, axis=0, edge_order=2)
    p2 = np.gradient(phi, h2, axis=1, edge_order=2)
    p12 = np.gradient(p1, h2, axis=1, edge_order=2)
    return p1, p2, second_diff(phi, h1, 0), p12, second_diff(phi, h2, 1)


OFFSETS = {
    "c": (0, 0), "e": (1, 0), "w": (-1, 0), "n": (0, 1), "s": (0, -1),
    "ne": (1, 1), "sw": (-1, -1), "se": (1, -1), "nw": (-1, 1),
}


def stencil_coefficients(b11, b12, b22, h1, h2, scale_k, parts=("x1", "x2", "cross")):
    """Per-node coefficients of L for the requested directional parts."""
    s11 = b11
    s12 = scale_k * b12
    s22 = scale_k**2 * b22
    d1 = -0.5 * b11
    d2 = -0.5 * scale_k * b11
    zero = np.zeros_like(b11)
    c = dict.fromkeys(OFFSETS, zero)
    center = zero
    if "x1" in parts:
        c["e"] = 0.5 * s11 / h1**2 + 0.5 * d1 / h1
        c["w"] = 0.5 * s11 / h1**2 - 0.5 * d1 / h1
        center = center - s11 / h1**2
    if "x2" in parts:
        c["n"] = 0.5 * s22 / h2**2 + 0.5 * d2 / h2
        c["s"] = 0.5 * s22 / h2**2 - 0.5 * d2 / h2
        center = center - s22 / h2**2
    if "cross" in parts:
        q = s12 / (4.0 * h1 * h2)
        c["ne"], c["sw"], c["se"], c["nw"] = q, q, -q, -q
    c["c"] = center
    return c


class StencilPlan:
    """Index bookkeeping and boundary rows for one (n1, n2) grid."""

    def __init__(self, x1, y2):
        self.x1 = np.asarray(x1, dtype=float)
        self.y2 = np.asarray(y2, dtype=float)
        n1, n2 = len(self.x1), len(self.y2)
        if n1 < 4 or n2 < 4:
            raise ValueError("stencils need at least 4 nodes per axis")
        self.n1, self.n2, self.size = n1, n2, n1 * n2
        self.h1 = float(self.x1[1] - self.x1[0])
        self.h2 = float(self.y2[1] - self.y2[0])
        ii, jj = np.meshgrid(np.arange(1, n1 - 1), np.arange(1, n2 - 1), indexing="ij")
        self.interior = (ii * n2 + jj).ravel()
        self._cols = {name: ((ii + di) * n2 + (jj + dj)).ravel()
                      for name, (di, dj) in OFFSETS.items()}
        mask = np.ones((n1, n2), dtype=bool)
        mask[1:-1, 1:-1] = False
        self.boundary_mask = mask.ravel()
        self.boundary = np.flatnonzero(self.boundary_mask)
        self.bc_matrix = self._boundary_rows()
        self._bc_rows, self._bc_cols, self._bc_vals = sparse.find(self.bc_matrix)

    def _boundary_rows(self):
        n1, n2 = self.n1, self.n2
        rows, cols, vals = [], [], []

        def add(p, qs, ws):
            rows.extend([p] * len(qs))
            cols.extend(qs)
            vals.extend(ws)

        for i in range(n1):
            for j in range(n2):
                p = i * n2 + j
                if j == 0:
                    add(p, [p], [1.0])
                elif i == 0:
                    add(p, [p, p + n2, p + 2 * n2], [1.0, -2.0, 1.0])
                elif i == n1 - 1:
                    add(p, [p, p - n2, p - 2 * n2], [1.0, -2.0, 1.0])
                elif j == n2 - 1:
                    add(p, [p, p - 1, p - 2], [1.0, -2.0, 1.0])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))

    def _interior_triplets(self, coeffs, scale, diag_shift):
        rows, cols, vals = [], [], []
        for name, arr in coeffs.items():
            v = np.broadcast_to(arr, (self.n1 - 2, self.n2 - 2)).ravel() * scale
            if name == "c":
                v = v + diag_shift
            elif not np.any(v):
                continue
            rows.append(self.interior)
            cols.append(self._cols[name])
            vals.append(v)
        return rows, cols, vals

    def operator(self, b11, b12, b22, scale_k, parts=("x1", "x2", "cross")):
        """Sparse L on interior rows; boundary rows are zero."""
        coeffs = stencil_coefficients(*(np.asarray(b)[1:-1, 1:-1] for b in (b11, b12, b22)),
                                      self.h1, self.h2, scale_k, parts)
        rows, cols, vals = self._interior_triplets(coeffs, 1.0, 0.0)
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size))

    def implicit_system(self, b11, b12, b22, scale_k, dt, parts=("x1", "x2", "cross")):
        """``I - dt*L`` on interior rows with the boundary rows attached (CSC)."""
        coeffs = stencil_coefficients(*(np.asarray(b)[1:-1, 1:-1] for b in (b11, b12, b22)),
                                      self.h1, self.h2, scale_k, parts)
        rows, cols, vals = self._interior_triplets(coeffs, -dt, 1.0)
        rows.append(self._bc_rows)
        cols.append(self._bc_cols)
        vals.append(self._bc_vals)
        return sparse.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size))

    def with_boundary(self, rhs, ref):
        """Overwrite boundary entries of a flat right-hand side with BC data from ``ref``.

        Works column-wise for 2-D ``(size, ncols)`` arrays.
        """
        out = np.array(rhs, dtype=float, copy=True)
        out[self.boundary] = (self.bc_matrix @ ref)[self.boundary]
        return out


@lru_cache(maxsize=16)
def _plan_cached(key):
    x1, y2 = key
    return StencilPlan(np.frombuffer(x1), np.frombuffer(y2))


def plan_for(x1, y2):
    """Shared :class:`StencilPlan` for a grid (cached by node values)."""
    return _plan_cached((np.ascontiguousarray(x1, dtype=float).tobytes(),
                         np.ascontiguousarray(y2, dtype=float).tobytes()))


def assemble_operator(beta, x1, y2, scale_k):
    """9-point discretisation of the generator for a diffusion slice ``beta``.

    ``beta`` is a ``(3, n1, n2)`` array (b11, b12, b22) in unscaled units; the
    drift is the Gamma drift ``(-b11/2, -b11/2)``.
    """
    return plan_for(x1, y2).operator(beta[0], beta[1], beta[2], scale_k)


class RowScaledLU:
    """Sparse LU of a row-equilibrated system.

    Boundary rows are O(1) while interior rows grow like dt*K^2*b22/h2^2;
    scaling every row by its largest entry keeps the factorisation's
    round-off near machine precision relative to |phi|.
    """

    def __init__(self, system):
        system = sparse.csr_matrix(system)
        scale = np.asarray(abs(system).max(axis=1).todense()).ravel()
        if np.any(scale == 0) or not np.all(np.isfinite(scale)):
            raise RuntimeError("singular or non-finite system")
        self.row_scale = 1.0 / scale
        self._lu = splu(sparse.csc_matrix(sparse.diags(self.row_scale) @ system))

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        scaled = rhs * (self.row_scale if rhs.ndim == 1 else self.row_scale[:, None])
        return self._lu.solve(scaled)
