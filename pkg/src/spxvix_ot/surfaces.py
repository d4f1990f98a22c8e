"""Time-sliced fields on a lattice whose x2 axis may switch to a refined phase."""
from __future__ import annotations

import csv

import numpy as np

from .conjugate import min_eigenvalue


def to_scaled(stack, scale_k):
    """``(b11, b12, b22)`` of (x1, x2) to the diffusion of (x1, K x2); axis -3 holds the entries."""
    stack = np.asarray(stack, dtype=float)
    factors = np.array([1.0, scale_k, scale_k**2]).reshape(3, 1, 1)
    return stack * factors


def from_scaled(stack, scale_k):
    stack = np.asarray(stack, dtype=float)
    factors = np.array([1.0, 1.0 / scale_k, 1.0 / scale_k**2]).reshape(3, 1, 1)
    return stack * factors


class DiffusionSurface:
    """Diffusion matrix (b11, b12, b22) per time interval, in unscaled coordinates.

    ``slices[k]`` has shape ``(3, n_x1, n_x2(k))`` where ``n_x2(k)`` depends on
    the grid phase of interval ``k``.  The transport cost and every distance
    between surfaces are measured on the scaled state (x1, K x2); see
    :func:`to_scaled`.
    """

    def __init__(self, lattice, slices):
        if len(slices) != lattice.time.n_steps:
            raise ValueError(f"expected {lattice.time.n_steps} slices, got {len(slices)}")
        for k, s in enumerate(slices):
            expected = (3, len(lattice.space.x1_nodes), len(lattice.space.x2_axis(k)))
            if s.shape != expected:
                raise ValueError(f"slice {k} has shape {s.shape}, expected {expected}")
        self.lattice = lattice
        self.slices = list(slices)

    @classmethod
    def from_builder(cls, lattice, build):
        return cls(lattice, [build(k, lattice.space.x2_axis(k))
                             for k in range(lattice.time.n_steps)])

    @classmethod
    def constant(cls, lattice, b11, b12, b22):
        c = np.array([b11, b12, b22], dtype=float)[:, None, None]
        n1 = len(lattice.space.x1_nodes)
        return cls.from_builder(
            lattice, lambda k, y2: np.broadcast_to(c, (3, n1, len(y2))).copy())

    def __len__(self):
        return len(self.slices)

    def __getitem__(self, k):
        return self.slices[k]

    def copy(self):
        return DiffusionSurface(self.lattice, [s.copy() for s in self.slices])

    def phase_ranges(self):
        """Contiguous interval ranges sharing one x2 axis."""
        n = len(self.slices)
        switch = min(self.lattice.space.phase_switch_index, n)
        return [r for r in (range(0, switch), range(switch, n)) if len(r)]

    def min_eigenvalue(self):
        return min(float(np.min(min_eigenvalue(s[0], s[1], s[2]))) for s in self.slices)

    def scaled_slices(self):
        k = self.lattice.space.scale_k
        return [to_scaled(s, k) for s in self.slices]

    def max_abs_diff(self, other):
        """Sup-norm distance in scaled coordinates."""
        k = self.lattice.space.scale_k
        return max(float(np.max(np.abs(to_scaled(a - b, k))))
                   for a, b in zip(self.slices, other.slices))

    def is_finite(self):
        return all(np.all(np.isfinite(s)) for s in self.slices)

    def dump_csv(self, path, every=1):
        write_surface_csv(path, self.lattice, self.slices, ("b11", "b12", "b22"), every)

    @classmethod
    def load_csv(cls, path, lattice):
        slices = [np.zeros((3, len(lattice.space.x1_nodes), len(lattice.space.x2_axis(k))))
                  for k in range(lattice.time.n_steps)]
        seen = [np.zeros(s.shape[1:], dtype=bool) for s in slices]
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                k, i, j = int(row["time_index"]), int(row["x1_index"]), int(row["x2_index"])
                slices[k][:, i, j] = float(row["b11"]), float(row["b12"]), float(row["b22"])
                seen[k][i, j] = True
        if not all(s.all() for s in seen):
            raise ValueError(f"{path}: surface does not cover every node of the lattice")
        return cls(lattice, slices)


class ValueSurface:
    """Scalar field per time node (phi for the HJB, phi' for pricing)."""

    def __init__(self, lattice, slices):
        if len(slices) != lattice.time.n_steps + 1:
            raise ValueError("one slice per time node expected")
        self.lattice = lattice
        self.slices = list(slices)

    def __getitem__(self, k):
        return self.slices[k]

    def __len__(self):
        return len(self.slices)

    def dump_csv(self, path, every=1):
        write_surface_csv(path, self.lattice, [s[None] for s in self.slices], ("phi",), every)


def write_surface_csv(path, lattice, slices, names, every=1):
    """Long-format dump keyed by (time_index, x1_index, x2_index)."""
    sp = lattice.space
    n_steps = lattice.time.n_steps
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_index", "t", "x1_index", "x2_index", "x1", "x2", *names])
        for k, s in enumerate(slices):
            if k % every and k != len(slices) - 1:
                continue
            y2 = sp.x2_axis(min(k, n_steps - 1))
            x2 = y2 / sp.scale_k
            for i, x1 in enumerate(sp.x1_nodes):
                for j in range(s.shape[-1]):
                    w.writerow([k, repr(float(lattice.time.nodes[k])), i, j, repr(float(x1)),
                                repr(float(x2[j])), *(repr(float(v)) for v in s[:, i, j])])
