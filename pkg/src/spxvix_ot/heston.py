"""Heston dynamics rewritten in (log-price, forward expected quadratic variation).

With ``A(t) = (1 - exp(-kappa (T - t))) / kappa`` the instantaneous variance is
an affine function of the state,

    nu = (2 x2 - theta (T - t)) / A(t) + theta,

and the characteristics are

    alpha = (-nu/2, -nu/2)
    beta  = [[nu, eta*omega*A*nu/2], [eta*omega*A*nu/2, omega^2 A^2 nu / 4]].
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .conjugate import Sym2, min_eigenvalue


@dataclass(frozen=True)
class HestonParams:
    kappa: float
    theta: float
    omega: float
    eta: float

    def __post_init__(self):
        if self.kappa <= 0 or self.theta <= 0 or self.omega <= 0:
            raise ValueError("kappa, theta and omega must be positive")
        if abs(self.eta) > 1:
            raise ValueError("correlation must lie in [-1, 1]")

    @property
    def feller(self):
        return 2 * self.kappa * self.theta > self.omega**2


def mean_reversion_factor(t, kappa, big_t):
    tau = np.asarray(big_t - t, dtype=float)
    if np.any(tau < -1e-14):
        raise ValueError("t must not exceed T")
    x = kappa * tau
    # expm1 keeps the kappa -> 0 limit A -> T - t accurate
    small = np.abs(x) < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small, tau * (1 - 0.5 * x), -np.expm1(-x) / kappa)
    return out if out.ndim else float(out)


def variance_from_x2(t, x2, kappa, theta, big_t, floor=True):
    if np.any(np.asarray(t) >= big_t):
        raise ValueError("variance is undefined at t = T (A vanishes)")
    a = mean_reversion_factor(t, kappa, big_t)
    nu = (2.0 * np.asarray(x2, dtype=float) - theta * (big_t - np.asarray(t))) / a + theta
    return np.maximum(nu, 0.0) if floor else nu


def x2_from_variance(t, nu, kappa, theta, big_t):
    a = mean_reversion_factor(t, kappa, big_t)
    return 0.5 * a * (np.asarray(nu, dtype=float) - theta) + 0.5 * theta * (big_t - np.asarray(t))


def heston_characteristics(t, x2, params, big_t):
    """Drift and diffusion of (X1, X2) under Heston at time ``t`` and level ``x2``."""
    nu = variance_from_x2(t, x2, params.kappa, params.theta, big_t)
    a = mean_reversion_factor(t, params.kappa, big_t)
    b12 = 0.5 * params.eta * params.omega * a * nu
    b22 = 0.25 * params.omega**2 * a**2 * nu
    return (-0.5 * nu, -0.5 * nu), Sym2(nu, b12, b22)


class ReferenceKind(str, Enum):
    HESTON = "heston"
    CONSTANT = "constant"
    EXTERNAL = "external"


@dataclass(frozen=True)
class ReferenceSpec:
    kind: ReferenceKind
    heston: HestonParams | None = None
    constants: tuple | None = None
    surface: object | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ReferenceKind(self.kind))
        payloads = {ReferenceKind.HESTON: self.heston, ReferenceKind.CONSTANT: self.constants,
                    ReferenceKind.EXTERNAL: self.surface}
        if payloads[self.kind] is None:
            raise ValueError(f"{self.kind.value} reference needs its payload")
        if sum(p is not None for p in payloads.values()) != 1:
            raise ValueError("exactly one reference payload may be set")
        if self.kind is ReferenceKind.CONSTANT:
            c11, c12, c22 = self.constants
            if min_eigenvalue(c11, c12, c22) < -1e-12:
                raise ValueError(f"constant reference {self.constants} is not PSD")


def reference_beta(spec, lattice):
    """Materialise the reference diffusion on every (time interval, node).

    Interval ``k`` is evaluated at its left end ``t_k``, matching the
    implicit time stepping that uses it.
    """
    from .surfaces import DiffusionSurface

    if spec.kind is ReferenceKind.EXTERNAL:
        return spec.surface
    big_t = lattice.time.horizon
    k_scale = lattice.space.scale_k
    x1 = lattice.space.x1_nodes

    def build(k, y2):
        if spec.kind is ReferenceKind.CONSTANT:
            # constants are given for the scaled state (x1, K x2)
            c11, c12, c22 = spec.constants
            c = np.array([c11, c12 / k_scale, c22 / k_scale**2], dtype=float)[:, None, None]
            return np.broadcast_to(c, (3, len(x1), len(y2))).copy()
        t = lattice.time.nodes[k]
        _, beta = heston_characteristics(t, y2 / k_scale, spec.heston, big_t)
        out = np.empty((3, len(x1), len(y2)))
        out[0], out[1], out[2] = beta.e11, beta.e12, beta.e22
        return out

    return DiffusionSurface.from_builder(lattice, build)


def heston_surface(params, lattice):
    """Generating-model characteristics as a diffusion surface."""
    return reference_beta(ReferenceSpec(ReferenceKind.HESTON, heston=params), lattice)
