"""Lossless structure-preserving power network.

Buses are ordered generators first, then loads. All vectors follow that
ordering; ``lines`` hold 0-based bus indices with the first entry taken as
the positive end of the line.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

SECURITY_LIMIT = np.pi / 2


class DisconnectedNetworkError(ValueError):
    """Raised when a bus graph splits into several components."""

    def __init__(self, components: list[list[int]]):
        self.components = components
        parts = "; ".join("{" + ", ".join(str(b) for b in c) + "}" for c in components)
        super().__init__(f"graph is disconnected, components: {parts}")


class SteadyStateError(RuntimeError):
    """No synchronous steady state found at the requested operating point."""


@dataclass(frozen=True)
class NetworkTopology:
    n_g: int
    n_l: int
    lines: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        return self.n_g + self.n_l

    @property
    def m(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class BusParams:
    kind: str  # "generator" | "load"
    D: float
    V: float
    M: float | None = None

    def __post_init__(self):
        if self.kind not in ("generator", "load"):
            raise ValueError(f"unknown bus kind {self.kind!r}")
        if self.kind == "generator" and not (self.M is not None and self.M > 0):
            raise ValueError("generator buses need inertia M > 0")
        if not self.D > 0:
            raise ValueError("damping D must be positive")
        if not self.V > 0:
            raise ValueError("voltage V must be positive")


@dataclass(frozen=True)
class LineParams:
    """Susceptance as tabulated (usually negative) and the coupling it induces."""

    B_ij: float
    V_i: float
    V_j: float

    @property
    def gamma(self) -> float:
        return abs(self.V_i * self.V_j * self.B_ij)


def component_labels(n: int, edges) -> list[list[int]]:
    edges = list(edges)
    if n == 0:
        return []
    rows = [e[0] for e in edges]
    cols = [e[1] for e in edges]
    adj = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
    count, labels = connected_components(adj, directed=False)
    return [sorted(np.flatnonzero(labels == c).tolist()) for c in range(count)]


def build_incidence(topology: NetworkTopology) -> np.ndarray:
    """Incidence matrix (n x m): +1 at the positive end of each line, -1 at the negative end."""
    n, m = topology.n, topology.m
    B = np.zeros((n, m))
    for k, (i, j) in enumerate(topology.lines):
        if i == j:
            raise ValueError(f"line {k} is a self-loop at bus {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"line {k} references a bus outside 0..{n - 1}")
        B[i, k] = 1.0
        B[j, k] = -1.0
    comps = component_labels(n, topology.lines)
    if len(comps) > 1:
        raise DisconnectedNetworkError(comps)
    return B


@dataclass(frozen=True)
class NetworkModel:
    topology: NetworkTopology
    M: np.ndarray
    D_g: np.ndarray
    D_l: np.ndarray
    V: np.ndarray
    gamma: np.ndarray
    base_power_mva: float = 100.0
    B: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "B", build_incidence(self.topology))
        t = self.topology
        for name, arr, size in (("M", self.M, t.n_g), ("D_g", self.D_g, t.n_g),
                                ("D_l", self.D_l, t.n_l), ("V", self.V, t.n),
                                ("gamma", self.gamma, t.m)):
            if np.shape(arr) != (size,):
                raise ValueError(f"{name} has shape {np.shape(arr)}, expected ({size},)")

    @classmethod
    def from_buses(cls, buses: list[BusParams], lines: list[tuple[int, int, float]],
                   base_power_mva: float = 100.0) -> NetworkModel:
        """Build from per-bus parameters (generators first) and ``(i, j, B_ij)`` triples."""
        kinds = [b.kind for b in buses]
        n_g = kinds.count("generator")
        if kinds != ["generator"] * n_g + ["load"] * (len(buses) - n_g):
            raise ValueError("buses must list all generators before all loads")
        V = np.array([b.V for b in buses], dtype=float)
        gamma = np.array([LineParams(b, V[i], V[j]).gamma for i, j, b in lines])
        return cls(
            topology=NetworkTopology(n_g, len(buses) - n_g, tuple((i, j) for i, j, _ in lines)),
            M=np.array([b.M for b in buses[:n_g]], dtype=float),
            D_g=np.array([b.D for b in buses[:n_g]], dtype=float),
            D_l=np.array([b.D for b in buses[n_g:]], dtype=float),
            V=V,
            gamma=gamma,
            base_power_mva=base_power_mva,
        )

    @property
    def n_g(self) -> int:
        return self.topology.n_g

    @property
    def n_l(self) -> int:
        return self.topology.n_l

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def m(self) -> int:
        return self.topology.m

    @property
    def B_g(self) -> np.ndarray:
        return self.B[: self.n_g]

    @property
    def B_l(self) -> np.ndarray:
        return self.B[self.n_g:]

    def line_flows(self, eta):
        return self.gamma * np.sin(eta)

    def injections(self, eta):
        """Net power leaving each bus over the lines, ``B Γ sin(η)``; sums to zero."""
        return self.line_flows(eta) @ self.B.T


def derived_load_frequency(eta, P_l, model: NetworkModel):
    """Load-bus frequencies from the algebraic balance; ``P_l`` may include controllable load."""
    return -(model.line_flows(eta) @ model.B_l.T + P_l) / model.D_l


def grid_rhs(eta, omega_g, P_m, P_l, model: NetworkModel):
    """Time derivatives of (η, ω_g) for the reduced network dynamics."""
    flows = model.line_flows(eta)
    omega_l = -(flows @ model.B_l.T + P_l) / model.D_l
    d_eta = omega_g @ model.B_g + omega_l @ model.B_l
    d_omega = (-model.D_g * omega_g - flows @ model.B_g.T + P_m) / model.M
    return d_eta, d_omega


def synchronous_frequency(P_m, P_l, D_g, D_l) -> float:
    total_damping = float(np.sum(D_g) + np.sum(D_l))
    if not total_damping > 0:
        raise ValueError("synchronous frequency undefined without positive damping")
    return float((np.sum(P_m) - np.sum(P_l)) / total_damping)


@dataclass(frozen=True)
class SteadyState:
    eta: np.ndarray
    omega_star: float
    delta: np.ndarray  # bus angles with bus 0 pinned at zero
    residual: float
    iterations: int

    @property
    def secure(self) -> bool:
        return bool(np.all(np.abs(self.eta) < SECURITY_LIMIT))


def _newton(B, gamma, p, delta0, tol, max_iter):
    """Damped Newton for B Γ sin(Bᵀδ) = p on buses 1.. with δ_0 = 0."""
    Br = B[1:]

    def residual(d):
        return Br @ (gamma * np.sin(B.T @ np.r_[0.0, d])) - p[1:]

    d = delta0.copy()
    r = residual(d)
    norm = np.max(np.abs(r), initial=0.0)
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return d, norm, it - 1
        eta = B.T @ np.r_[0.0, d]
        J = (Br * (gamma * np.cos(eta))) @ Br.T
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None, norm, it
        alpha = 1.0
        while alpha > 1e-6:
            trial = d + alpha * step
            r_trial = residual(trial)
            n_trial = np.max(np.abs(r_trial))
            if n_trial < norm:
                break
            alpha *= 0.5
        else:
            return None, norm, it
        d, r, norm = trial, r_trial, n_trial
    if norm <= tol:
        return d, norm, max_iter
    return None, norm, max_iter


def solve_steady_state(P_m, P_l, model: NetworkModel, tol: float = 1e-10,
                       max_iter: int = 100) -> SteadyState:
    """Synchronous equilibrium for constant generation and load.

    Tries a flat start first and then the DC power-flow solution. Raises
    :class:`SteadyStateError` when neither converges.
    """
    P_m = np.asarray(P_m, dtype=float)
    P_l = np.asarray(P_l, dtype=float)
    w = synchronous_frequency(P_m, P_l, model.D_g, model.D_l)
    p = np.r_[P_m - model.D_g * w, -P_l - model.D_l * w]
    B, gamma = model.B, model.gamma
    if model.n == 1:
        return SteadyState(np.zeros(model.m), w, np.zeros(1), 0.0, 0)

    Br = B[1:]
    dc_guess = np.linalg.solve((Br * gamma) @ Br.T, p[1:])
    last_norm = np.inf
    for guess in (np.zeros(model.n - 1), dc_guess):
        d, norm, its = _newton(B, gamma, p, guess, tol, max_iter)
        if d is not None:
            delta = np.r_[0.0, d]
            eta = B.T @ delta
            res = float(np.max(np.abs(model.injections(eta) - p)))
            return SteadyState(eta, w, delta, res, its)
        last_norm = min(last_norm, norm)
    raise SteadyStateError(
        f"Newton did not converge within {max_iter} iterations "
        f"(best residual {last_norm:.3e}); the network cannot carry the requested transfer"
    )
