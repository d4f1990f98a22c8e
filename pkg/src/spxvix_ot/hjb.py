"""Backward solution of the dual HJB equation by implicit policy iteration.

Between payoff dates the value function solves

    d_t phi + sup_beta { L(beta) phi - |beta - beta_bar|^2 } = 0,

and at every payoff date the multiplier-weighted payoffs are added to it.
Each implicit step alternates between the nodewise optimal diffusion (the
conjugate projection) and a linear solve until the iterates agree to
``eps2`` in the sup-norm.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .conjugate import Sym2, intermediate_abc, penalty, project_abc
from .lattice import regrid_array
from .stencil import RowScaledLU, derivatives, plan_for
from .surfaces import DiffusionSurface, ValueSurface, from_scaled, to_scaled

log = logging.getLogger(__name__)

DEFAULT_EPS2 = 1e-8
MAX_POLICY_ITER = 50


class HjbError(RuntimeError):
    """Policy iteration failed; carries the time index and last residual."""

    def __init__(self, message, time_index=None, residual=None):
        super().__init__(message)
        self.time_index = time_index
        self.residual = residual


@dataclass
class HjbSolution:
    phi_slices: ValueSurface | None
    beta_star: DiffusionSurface
    phi_at_origin: float
    policy_iterations: list


def policy_beta(phi, beta_bar, plan, scale_k, with_cost=False):
    """Optimal diffusion slice ``(3, n1, n2)`` (unscaled) for the current value slice.

    ``with_cost=True`` also returns the nodewise penalty, evaluated before
    unscaling so that ``beta = beta_bar`` costs exactly zero.

    The projection runs on the scaled state (x1, K x2): the Hessian is taken
    on the grid as is, while the drift gradient is in unscaled x2 because
    both drift components equal -beta11/2 there.
    """
    p1, p2, p11, p12, p22 = derivatives(phi, plan.h1, plan.h2)
    grad = (p1, scale_k * p2)
    half_hess = Sym2(0.5 * p11, 0.5 * p12, 0.5 * p22)
    bbar = Sym2(*to_scaled(beta_bar, scale_k))
    b11, b12, b22, _ = project_abc(*intermediate_abc(grad, half_hess, bbar))
    beta = from_scaled(np.stack([b11, b12, b22]), scale_k)
    if with_cost:
        return beta, penalty(b11, b12, b22, bbar)
    return beta


def scaled_penalty(beta, beta_bar, scale_k):
    """Nodewise ``|beta - beta_bar|^2`` on the scaled state."""
    b = to_scaled(beta, scale_k)
    return penalty(b[0], b[1], b[2], Sym2(*to_scaled(beta_bar, scale_k)))


def apply_jump_conditions(phi, node, multipliers, problem, fine):
    """``phi(t-) = phi(t) + sum of multiplier * scaled payoff`` for payoffs maturing at ``node``."""
    out = np.array(phi, dtype=float, copy=True)
    for n in problem.instruments_at(node):
        lam = multipliers[n]
        if lam != 0.0:
            out += lam * problem.scaled_payoff(n, fine)
    return out


def policy_iteration_step(phi_next, dt, beta_bar, plan, scale_k, bc_ref,
                          eps2=DEFAULT_EPS2, max_iter=MAX_POLICY_ITER, time_index=None):
    """One implicit step; returns ``(phi, beta_star, iterations)``.

    Iterates until ``max|phi_new - phi_old| <= eps2 * max|phi_new|``.
    """
    n1, n2 = phi_next.shape
    rhs_base = phi_next.ravel()
    bc = plan.with_boundary(np.zeros(plan.size), bc_ref.ravel())
    phi_old = phi_next
    residual = np.inf
    for it in range(1, max_iter + 1):
        beta, cost = policy_beta(phi_old, beta_bar, plan, scale_k, with_cost=True)
        rhs = rhs_base - dt * cost.ravel()
        rhs[plan.boundary] = bc[plan.boundary]
        system = plan.implicit_system(beta[0], beta[1], beta[2], scale_k, dt)
        try:
            phi_new = RowScaledLU(system).solve(rhs).reshape(n1, n2)
        except RuntimeError as exc:
            raise HjbError(f"linear solve failed at time index {time_index}: {exc}",
                           time_index, residual) from exc
        if not np.all(np.isfinite(phi_new)):
            raise HjbError(f"non-finite value function at time index {time_index}",
                           time_index, residual)
        residual = float(np.max(np.abs(phi_new - phi_old)))
        # relative: tiny multipliers give tiny phi whose increments still matter to the outer loop
        if residual <= eps2 * float(np.max(np.abs(phi_new))):
            return phi_new, beta, it
        phi_old = phi_new
    raise HjbError(f"policy iteration did not converge at time index {time_index} "
                   f"(residual {residual:.3e} after {max_iter} iterations)", time_index, residual)


def solve_hjb_backward(multipliers, beta_bar, problem, eps2=DEFAULT_EPS2,
                       max_policy_iter=MAX_POLICY_ITER, keep_phi=False):
    """March the HJB from T to 0 and read off ``phi(0, X0)``.

    ``multipliers`` is the flat vector in the problem's instrument order;
    ``beta_bar`` the reference :class:`DiffusionSurface`.
    """
    lam = np.asarray(multipliers, dtype=float)
    if lam.shape != (problem.size,):
        raise ValueError(f"expected {problem.size} multipliers")
    lattice = problem.lattice
    sp = lattice.space
    nodes = lattice.time.nodes
    n_steps = lattice.time.n_steps
    events = set(problem.event_nodes)

    fine = lattice.node_is_fine(n_steps)
    phi = np.zeros((len(sp.x1_nodes), len(sp.x2_axis(n_steps - 1))))
    bc_ref = phi
    phi_slices = [None] * (n_steps + 1)
    beta_slices = [None] * n_steps
    iterations = [0] * n_steps
    for k in range(n_steps, 0, -1):
        fine = lattice.node_is_fine(k)
        if k in events:
            phi = apply_jump_conditions(phi, k, lam, problem, fine)
            bc_ref = phi
        if keep_phi:
            phi_slices[k] = phi
        y2 = sp.x2_axis(k - 1)
        if phi.shape[1] != len(y2):
            src = sp.x2_axis(min(k, n_steps - 1))
            phi = regrid_array(phi, src, y2)
            bc_ref = regrid_array(bc_ref, src, y2)
        plan = plan_for(sp.x1_nodes, y2)
        try:
            phi, beta, its = policy_iteration_step(
                phi, nodes[k] - nodes[k - 1], beta_bar[k - 1], plan, sp.scale_k, bc_ref,
                eps2=eps2, max_iter=max_policy_iter, time_index=k - 1)
        except HjbError:
            log.debug("HJB step failed at interval %d", k - 1)
            raise
        beta_slices[k - 1] = beta
        iterations[k - 1] = its
    phi_slices[0] = phi
    i0, j0 = sp.origin(fine=lattice.node_is_fine(0))
    return HjbSolution(
        phi_slices=ValueSurface(lattice, phi_slices) if keep_phi else None,
        beta_star=DiffusionSurface(lattice, beta_slices),
        phi_at_origin=float(phi[i0, j0]),
        policy_iterations=iterations,
    )
