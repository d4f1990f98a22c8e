"""Convex conjugate of the quadratic penalty over the cone Gamma.

For ``a`` (gradient), ``b`` (half Hessian) and a reference ``beta_bar``, the
supremum over PSD diffusions reduces to projecting

    M = [[A, B], [B, C]]
    A = beta_bar11 + b11/2 - a1/4 - a2/4,  B = beta_bar12 + b12/2,  C = beta_bar22 + b22/2

onto the PSD cone under the weighted norm (x-A)^2 + 2(y-B)^2 + (z-C)^2,
which is the Frobenius distance for symmetric matrices.  Everything here is
vectorised over arbitrary array shapes; the three matrix entries travel as
separate arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSD_TOL = 1e-10

INTERIOR, ZERO, CONE_BOUNDARY = 0, 1, 2
CASE_NAMES = {INTERIOR: "interior", ZERO: "zero", CONE_BOUNDARY: "cone-boundary"}


@dataclass(frozen=True)
class Sym2:
    e11: np.ndarray | float
    e12: np.ndarray | float
    e22: np.ndarray | float

    def as_matrix(self):
        return np.array([[self.e11, self.e12], [self.e12, self.e22]], dtype=float)

    def is_psd(self, tol=PSD_TOL):
        return bool(np.all(min_eigenvalue(self.e11, self.e12, self.e22) >= -tol))


@dataclass(frozen=True)
class ConjugateResult:
    value: np.ndarray | float
    beta_star: Sym2
    case_tag: np.ndarray | str


def min_eigenvalue(e11, e12, e22):
    half_tr = 0.5 * (np.asarray(e11) + e22)
    rad = np.hypot(0.5 * (np.asarray(e11) - e22), e12)
    return half_tr - rad


def intermediate_abc(a, b, beta_bar):
    a1, a2 = a
    A = beta_bar.e11 + 0.5 * b.e11 - 0.25 * a1 - 0.25 * a2
    B = beta_bar.e12 + 0.5 * b.e12
    C = beta_bar.e22 + 0.5 * b.e22
    return A, B, C


def _cone_point(x, y):
    r = np.sqrt(x * x + y * y)
    return x + r, y, -x + r


def project_abc(A, B, C, tol=PSD_TOL):
    """Closed-form PSD projection of ``[[A, B], [B, C]]``; returns (b11, b12, b22, case)."""
    A, B, C = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (A, B, C)))
    half_tr = 0.5 * (A + C)
    rad = np.hypot(0.5 * (A - C), B)
    lam_min = half_tr - rad
    lam_max = half_tr + rad
    case = np.full(A.shape, CONE_BOUNDARY, dtype=np.int8)
    case[lam_min >= -tol] = INTERIOR
    case[(case != INTERIOR) & (lam_max <= 0.0)] = ZERO

    b11 = np.where(case == INTERIOR, A, 0.0)
    b12 = np.where(case == INTERIOR, B, 0.0)
    b22 = np.where(case == INTERIOR, C, 0.0)

    m = case == CONE_BOUNDARY
    if np.any(m):
        a_, b_, c_ = A[m], B[m], C[m]
        # in case 3 the eigenvalues have strictly opposite signs, so disc > 0
        disc = np.sqrt(4.0 * b_ * b_ + (a_ - c_) ** 2)
        u = (a_ - c_) / 4.0
        v = (a_ * a_ - c_ * c_) / (4.0 * disc)
        p = b_ / 2.0
        q = b_ * (a_ + c_) / (2.0 * disc)
        plus = _cone_point(u + v, p + q)
        minus = _cone_point(u - v, p - q)

        def dist(pt):
            return (pt[0] - a_) ** 2 + 2.0 * (pt[1] - b_) ** 2 + (pt[2] - c_) ** 2

        take_minus = dist(minus) < dist(plus)
        b11[m] = np.where(take_minus, minus[0], plus[0])
        b12[m] = np.where(take_minus, minus[1], plus[1])
        b22[m] = np.where(take_minus, minus[2], plus[2])
    return b11, b12, b22, case


def penalty(b11, b12, b22, beta_bar):
    """``sum_ij (beta_ij - beta_bar_ij)^2`` with the off-diagonal counted twice."""
    return ((b11 - beta_bar.e11) ** 2 + 2.0 * (b12 - beta_bar.e12) ** 2
            + (b22 - beta_bar.e22) ** 2)


def conjugate_f_star(a, b, beta_bar, tol=PSD_TOL):
    """Value of F*(a, b) and its maximiser beta*."""
    A, B, C = intermediate_abc(a, b, beta_bar)
    b11, b12, b22, case = project_abc(A, B, C, tol)
    a1, a2 = a
    value = ((b.e11 - 0.5 * a1 - 0.5 * a2) * b11 + 2.0 * b.e12 * b12 + b.e22 * b22
             - penalty(b11, b12, b22, beta_bar))
    if np.ndim(case) == 0:
        return ConjugateResult(float(value), Sym2(float(b11), float(b12), float(b22)),
                               CASE_NAMES[int(case)])
    return ConjugateResult(value, Sym2(b11, b12, b22), case)


def psd_project_oracle(m):
    """Eigen-clip projection of a symmetric 2x2 matrix onto the PSD cone."""
    mat = np.array([[m.e11, m.e12], [m.e12, m.e22]], dtype=float)
    if mat.ndim > 2:
        mat = np.moveaxis(mat, (0, 1), (-2, -1))
    w, v = np.linalg.eigh(mat)
    w = np.maximum(w, 0.0)
    p = (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)
    return Sym2(p[..., 0, 0], 0.5 * (p[..., 0, 1] + p[..., 1, 0]), p[..., 1, 1])


def optimal_characteristics(grad_phi, hess_phi, beta_bar, tol=PSD_TOL):
    """Optimal drift/diffusion given the value-function gradient and Hessian.

    ``hess_phi`` is the full Hessian; the conjugate is evaluated at half of it.
    The drift follows from membership in Gamma: alpha1 = alpha2 = -beta11/2.
    """
    half = Sym2(0.5 * hess_phi.e11, 0.5 * hess_phi.e12, 0.5 * hess_phi.e22)
    A, B, C = intermediate_abc(grad_phi, half, beta_bar)
    b11, b12, b22, _ = project_abc(A, B, C, tol)
    alpha = -0.5 * b11
    return (alpha, alpha), Sym2(b11, b12, b22)
