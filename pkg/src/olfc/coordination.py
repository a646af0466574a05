"""Distributed controllers that steer the turbine-governor setpoints θ.

Each controller combines a local term with a *coupling* vector computed from
the communication graph. For the consensus scheme the coupling is
``Q L (Qθ + R)``; for the primal-dual scheme it is ``∇C(θ) - λ``. The
per-order rhs functions take that coupling as an argument so mixed
first/second-order networks share one Laplacian product.

Controllable loads join the same consensus through a common *price signal*:
generators broadcast their marginal cost ``qθ + r`` and loads their marginal
benefit ``r - qθ_l``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import DisconnectedNetworkError, component_labels

CONNECTIVITY_TOL = 1e-9


@dataclass(frozen=True)
class CommGraph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    laplacian: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "laplacian", build_comm_laplacian(self))


@dataclass(frozen=True)
class DestabilizationOverride:
    """Multiplies the frequency gain of one second-order controller by ``gain`` from ``start_time`` on."""

    controller: int
    gain: float
    start_time: float = 0.0


def build_comm_laplacian(comm: CommGraph, require_connected: bool = True) -> np.ndarray:
    n = comm.n_nodes
    L = np.zeros((n, n))
    for i, j in comm.edges:
        if i == j:
            raise ValueError(f"communication self-loop at controller {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"communication edge ({i}, {j}) references an unknown controller")
        if L[i, j] != 0:
            continue
        L[i, j] = L[j, i] = -1.0
        L[i, i] += 1.0
        L[j, j] += 1.0
    if require_connected and n > 1:
        comps = component_labels(n, comm.edges)
        if len(comps) > 1:
            raise DisconnectedNetworkError(comps)
        fiedler = np.linalg.eigvalsh(L)[1]
        if fiedler <= CONNECTIVITY_TOL:
            raise ValueError(f"communication graph algebraic connectivity {fiedler:.3e} too small")
    return L


def consensus_coupling(theta, q, r, laplacian):
    """``Q L (Qθ + R)``; entry i equals q_i Σ_j over neighbours of the marginal-cost difference."""
    return q * (laplacian @ (q * theta + r))


def price_signal(theta_g, q_g, r_g, theta_l=None, q_l=None, r_l=None):
    """Marginal costs of generators followed by marginal benefits of controllable loads."""
    p = q_g * theta_g + r_g
    if theta_l is None or len(theta_l) == 0:
        return p
    return np.concatenate([p, r_l - q_l * theta_l])


def joint_coupling(theta_g, q_g, r_g, theta_l, q_l, r_l, laplacian):
    """Coupling for a communication graph shared by generators and controllable loads.

    Returns (generator part, load part). The load part carries the opposite
    sign because a load's marginal benefit falls as its consumption θ_l rises.
    """
    ng = len(theta_g)
    Lp = laplacian @ price_signal(theta_g, q_g, r_g, theta_l, q_l, r_l)
    return q_g * Lp[:ng], -q_l * Lp[ng:]


def consensus_rhs_order1(theta, P_m, coupling, T_theta, K_inv):
    return (-theta + P_m - K_inv * coupling) / T_theta


def consensus_rhs_order2(theta, P_s, omega_g, coupling, T_theta, K_inv, gain=1.0):
    """Second-order controller; ``gain`` scales the frequency feedback (1 is nominal)."""
    return (-theta + P_s - gain * (1 - K_inv) * omega_g - coupling) / T_theta


def primal_dual_coupling(theta, lam_g, q, r):
    return q * theta + r - lam_g


def multiplier_rhs(v, lam, theta, P_l, incidence, k_v=1.0, k_lambda=1.0):
    """Virtual line flows v and bus multipliers λ of the primal-dual scheme.

    v lives on the physical lines: the scheme enforces power balance over the
    physical incidence matrix, not over the communication graph.
    """
    dv = -k_v * (lam @ incidence)
    dlam = k_lambda * (incidence @ v - np.concatenate([theta, -P_l]))
    return dv, dlam


def primal_dual_rhs(theta, v, lam, P_m, P_s, omega_g, P_l, incidence, q, r, order,
                    T_theta, K_inv, k_v=1.0, k_lambda=1.0, gain=1.0):
    """Derivatives of (θ, v, λ). ``order`` selects per unit whether P_m or P_s drives θ;
    ``P_s`` entries for first-order units are ignored."""
    order = np.asarray(order)
    coupling = primal_dual_coupling(theta, lam[: len(theta)], q, r)
    first = order == 1
    d_theta = np.where(
        first,
        consensus_rhs_order1(theta, P_m, coupling, T_theta, K_inv),
        consensus_rhs_order2(theta, np.where(first, 0.0, P_s), omega_g, coupling, T_theta, K_inv, gain),
    )
    dv, dlam = multiplier_rhs(v, lam, theta, P_l, incidence, k_v, k_lambda)
    return d_theta, dv, dlam


def load_controller_rhs(omega_l, coupling, T_theta):
    """Controllable-load setpoint dynamics; the consumed power is u_l = θ_l."""
    return (omega_l - coupling) / T_theta
