"""Linear-quadratic economic dispatch and its social-welfare variant."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class CostFunction:
    """Generation cost ``q/2 P² + r P + s`` with q > 0."""

    q: float
    r: float
    s: float = 0.0

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError(f"cost curvature q must be positive, got {self.q}")

    def __call__(self, P):
        return 0.5 * self.q * np.square(P) + self.r * P + self.s

    def marginal(self, P):
        return self.q * P + self.r


@dataclass(frozen=True)
class BenefitFunction:
    """Concave utility of consuming ``u``: ``-q/2 u² + r u + s`` with q > 0.

    ``q`` is stored as a positive magnitude; the quadratic enters with a
    negative sign so the welfare objective stays concave.
    """

    q: float
    r: float
    s: float = 0.0

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError(f"benefit curvature q must be positive, got {self.q}")

    def __call__(self, u):
        return -0.5 * self.q * np.square(u) + self.r * u + self.s

    def marginal(self, u):
        return self.r - self.q * u


@dataclass(frozen=True)
class DispatchResult:
    P_m_opt: np.ndarray
    lambda_opt: float
    total_cost: float


@dataclass(frozen=True)
class WelfareResult:
    P_m_opt: np.ndarray
    u_l_opt: np.ndarray
    lambda_opt: float
    welfare: float


def cost_arrays(costs: Sequence[CostFunction]):
    q = np.array([c.q for c in costs], dtype=float)
    r = np.array([c.r for c in costs], dtype=float)
    s = np.array([c.s for c in costs], dtype=float)
    return q, r, s


def total_cost(P_m, costs: Sequence[CostFunction]) -> float:
    q, r, s = cost_arrays(costs)
    P_m = np.asarray(P_m, dtype=float)
    return float(np.sum(0.5 * q * P_m**2 + r * P_m + s))


def marginal_costs(P_m, costs: Sequence[CostFunction]) -> np.ndarray:
    q, r, _ = cost_arrays(costs)
    return q * np.asarray(P_m, dtype=float) + r


def optimal_dispatch(costs: Sequence[CostFunction], total_load: float) -> DispatchResult:
    """Closed-form minimiser of total cost subject to generation matching load."""
    if len(costs) == 0:
        raise ValueError("dispatch needs at least one generator")
    q, r, _ = cost_arrays(costs)
    lam = (total_load + np.sum(r / q)) / np.sum(1.0 / q)
    P = (lam - r) / q
    # absorb rounding so the balance holds to the last bit we can manage
    P[np.argmax(1.0 / q)] += total_load - np.sum(P)
    return DispatchResult(P, float(lam), total_cost(P, costs))


def brute_force_dispatch(costs: Sequence[CostFunction], total_load: float,
                         grid_resolution: float, max_points: int = 4_000_000) -> DispatchResult:
    """Grid search on the balance hyperplane followed by pairwise-transfer descent.

    Kept deliberately naive: it is the cross-check for :func:`optimal_dispatch`
    and only scales to a handful of generators.
    """
    n = len(costs)
    if n == 0:
        raise ValueError("dispatch needs at least one generator")
    if not grid_resolution > 0:
        raise ValueError("grid_resolution must be positive")
    if n > 4:
        raise ValueError("brute-force oracle supports at most 4 generators")
    if n == 1:
        P = np.array([float(total_load)])
        return DispatchResult(P, float(costs[0].marginal(P[0])), total_cost(P, costs))

    q, r, s = cost_arrays(costs)
    span = max(abs(total_load), 1.0)
    lo, hi = min(0.0, total_load) - span, max(0.0, total_load) + span
    axis = np.arange(lo, hi + grid_resolution / 2, grid_resolution)
    if axis.size ** (n - 1) > max_points:
        raise ValueError(
            f"grid of {axis.size}^{n - 1} points exceeds the oracle budget; coarsen the resolution"
        )

    grids = np.meshgrid(*([axis] * (n - 1)), indexing="ij")
    free = np.stack([g.ravel() for g in grids], axis=1)
    last = total_load - free.sum(axis=1)
    P_all = np.column_stack([free, last])
    cost = (0.5 * q * P_all**2 + r * P_all).sum(axis=1)
    P = P_all[np.argmin(cost)].copy()

    def f(x):
        return float(np.sum(0.5 * q * x**2 + r * x + s))

    step = grid_resolution
    current = f(P)
    while step > 1e-12:
        improved = False
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                trial = P.copy()
                trial[i] += step
                trial[j] -= step
                c = f(trial)
                if c < current:
                    P, current, improved = trial, c, True
        if not improved:
            step *= 0.5
    lam = float(np.mean(q * P + r))
    return DispatchResult(P, lam, current)


def social_welfare_dispatch(gen_costs: Sequence[CostFunction],
                            load_benefits: Sequence[BenefitFunction],
                            inflexible_load: float) -> WelfareResult:
    """Maximise total benefit minus generation cost with generation = P_l + u_l.

    At the optimum every generator's marginal cost and every controllable
    load's marginal benefit equal the common price.
    """
    if len(gen_costs) == 0:
        raise ValueError("dispatch needs at least one generator")
    qg, rg, sg = cost_arrays(gen_costs)
    if load_benefits:
        ql = np.array([b.q for b in load_benefits], dtype=float)
        rl = np.array([b.r for b in load_benefits], dtype=float)
        sl = np.array([b.s for b in load_benefits], dtype=float)
    else:
        ql = rl = sl = np.zeros(0)
    lam = (inflexible_load + np.sum(rg / qg) + np.sum(rl / ql)) / (np.sum(1 / qg) + np.sum(1 / ql))
    P = (lam - rg) / qg
    u = (rl - lam) / ql
    welfare = float(np.sum(-0.5 * ql * u**2 + rl * u + sl) - np.sum(0.5 * qg * P**2 + rg * P + sg))
    return WelfareResult(P, u, float(lam), welfare)
