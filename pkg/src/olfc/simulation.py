"""Closed-loop assembly and fixed-step simulation.

The network, turbine-governors and controllers are stacked into one state
vector described by a :class:`StateLayout`. Loads and destabilising overrides
are piecewise constant; integration steps are split at their breakpoints so
every change takes effect at an exact time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .actuation import TurbineGovernor, tg1_rhs, tg2_rhs
from .coordination import (
    CommGraph,
    DestabilizationOverride,
    consensus_coupling,
    consensus_rhs_order1,
    consensus_rhs_order2,
    joint_coupling,
    load_controller_rhs,
    multiplier_rhs,
    price_signal,
)
from .dispatch import BenefitFunction, CostFunction, cost_arrays, optimal_dispatch, social_welfare_dispatch
from .grid import NetworkModel, derived_load_frequency, grid_rhs, solve_steady_state
from .integrate import rk4_step

log = logging.getLogger(__name__)

FAMILIES = ("consensus", "primal_dual", "decentralized", "none")
SLICE_ORDER = ("eta", "omega_g", "P_m", "P_s", "theta", "v", "lambda", "theta_l")
_TIME_TOL = 1e-9


@dataclass(frozen=True)
class GeneratorUnit:
    turbine: TurbineGovernor
    cost: CostFunction


@dataclass(frozen=True)
class ControllableLoad:
    load_index: int  # position among the load buses
    benefit: BenefitFunction
    T_theta: float


@dataclass(frozen=True)
class ControllerSpec:
    family: str = "consensus"
    comm: CommGraph | None = None
    overrides: tuple[DestabilizationOverride, ...] = ()
    k_v: float = 1.0
    k_lambda: float = 1.0
    loads: tuple[ControllableLoad, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown controller family {self.family!r}; expected one of {FAMILIES}")
        if self.loads and self.family not in ("consensus", "decentralized"):
            raise ValueError("controllable loads combine only with consensus or decentralized control")


@dataclass(frozen=True)
class LoadSchedule:
    times: tuple[float, ...]
    loads: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.times) != len(self.loads) or not self.times:
            raise ValueError("schedule needs matching, non-empty time and load lists")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule times must be strictly increasing")

    def index(self, t: float) -> int:
        return max(int(np.searchsorted(self.times, t + _TIME_TOL, side="right")) - 1, 0)

    def at(self, t: float) -> np.ndarray:
        return self.loads[self.index(t)]

    @property
    def last_event(self) -> float:
        return self.times[-1] if len(self.times) > 1 else 0.0


@dataclass
class Scenario:
    model: NetworkModel
    units: Sequence[GeneratorUnit]
    controller: ControllerSpec
    schedule: LoadSchedule
    horizon: float
    dt: float = 1e-3
    divergence_bound: float = 1e6
    load_perturbation: Callable[[float], np.ndarray] | None = None
    name: str = "scenario"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if len(self.units) != self.model.n_g:
            raise ValueError(f"{len(self.units)} units for {self.model.n_g} generator buses")
        for load in self.schedule.loads:
            if np.shape(load) != (self.model.n_l,):
                raise ValueError(f"load vectors must have length {self.model.n_l}")

    @property
    def costs(self) -> list[CostFunction]:
        return [u.cost for u in self.units]

    @property
    def orders(self) -> np.ndarray:
        return np.array([u.turbine.order for u in self.units])

    def base_loads(self, t: float) -> np.ndarray:
        P = self.schedule.at(t)
        if self.load_perturbation is not None:
            P = P + self.load_perturbation(t)
        return P

    def optimum(self, t: float):
        """Optimal generation (and controllable load) for the loads active at ``t``."""
        P_l = self.base_loads(t)
        loads = self.controller.loads
        if loads:
            return social_welfare_dispatch(self.costs, [c.benefit for c in loads], float(np.sum(P_l)))
        return optimal_dispatch(self.costs, float(np.sum(P_l)))


@dataclass(frozen=True)
class StateLayout:
    slices: dict[str, slice]
    size: int

    @classmethod
    def from_sizes(cls, sizes: dict[str, int]) -> StateLayout:
        slices, offset = {}, 0
        for name in SLICE_ORDER:
            n = sizes.get(name, 0)
            slices[name] = slice(offset, offset + n)
            offset += n
        return cls(slices, offset)

    def length(self, name: str) -> int:
        s = self.slices[name]
        return s.stop - s.start

    def pack(self, **parts) -> np.ndarray:
        x = np.zeros(self.size)
        for name, value in parts.items():
            x[self.slices[name]] = value
        return x


@dataclass
class SystemState:
    values: np.ndarray
    layout: StateLayout

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[self.layout.slices[name]]


@dataclass(frozen=True)
class _Segment:
    P_l: np.ndarray
    gain: np.ndarray  # frequency-gain multipliers of the second-order units


class _Bank:
    """Per-unit parameters as arrays, duck-typing :class:`TurbineGovernor`."""

    def __init__(self, turbines: Sequence[TurbineGovernor]):
        self.T_m = np.array([u.T_m for u in turbines], dtype=float)
        self.T_s = np.array([u.T_s or np.nan for u in turbines], dtype=float)
        self.K_inv = np.array([u.K_inv for u in turbines], dtype=float)
        self.T_theta = np.array([u.T_theta for u in turbines], dtype=float)


class ClosedLoop:
    """Compiled right-hand side of a scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = sc = scenario
        self.model = model = sc.model
        ctrl = sc.controller
        self.family = ctrl.family
        turbines = [u.turbine for u in sc.units]
        orders = sc.orders
        self.idx1 = np.flatnonzero(orders == 1)
        self.idx2 = np.flatnonzero(orders == 2)
        self.bank1 = _Bank([turbines[i] for i in self.idx1])
        self.bank2 = _Bank([turbines[i] for i in self.idx2])
        self.q, self.r, _ = cost_arrays(sc.costs)
        self.load_idx = np.array([c.load_index for c in ctrl.loads], dtype=int)
        self.q_l = np.array([c.benefit.q for c in ctrl.loads], dtype=float)
        self.r_l = np.array([c.benefit.r for c in ctrl.loads], dtype=float)
        self.T_l = np.array([c.T_theta for c in ctrl.loads], dtype=float)
        self.laplacian = ctrl.comm.laplacian if ctrl.comm is not None else None
        if self.family in ("consensus",) and self.laplacian is None:
            raise ValueError("consensus control needs a communication graph")
        if self.laplacian is not None and self.laplacian.shape[0] != model.n_g + len(ctrl.loads):
            raise ValueError("communication graph size does not match the number of controllers")

        active = self.family != "none"
        self.layout = StateLayout.from_sizes({
            "eta": model.m,
            "omega_g": model.n_g,
            "P_m": model.n_g,
            "P_s": len(self.idx2) if active else 0,
            "theta": model.n_g if active else 0,
            "v": model.m if self.family == "primal_dual" else 0,
            "lambda": model.n if self.family == "primal_dual" else 0,
            "theta_l": len(ctrl.loads),
        })

        self.overrides = []
        pos2 = {int(u): k for k, u in enumerate(self.idx2)}
        for o in ctrl.overrides:
            if o.controller not in pos2:
                raise ValueError(f"override targets controller {o.controller}, which is not second-order")
            self.overrides.append((pos2[o.controller], o.gain, o.start_time))
        times = set(sc.schedule.times[1:]) | {o.start_time for o in ctrl.overrides}
        self.breakpoints = np.array(sorted(t for t in times if 0 < t < sc.horizon + _TIME_TOL))

    def segment(self, t: float) -> _Segment:
        gain = np.ones(len(self.idx2))
        for k, g, start in self.overrides:
            if t + _TIME_TOL >= start:
                gain[k] = g
        return _Segment(self.scenario.schedule.at(t), gain)

    def loads_at(self, t: float, seg: _Segment) -> np.ndarray:
        pert = self.scenario.load_perturbation
        return seg.P_l if pert is None else seg.P_l + pert(t)

    def rhs(self, t: float, x: np.ndarray, seg: _Segment) -> np.ndarray:
        sl = self.layout.slices
        eta, w, Pm = x[sl["eta"]], x[sl["omega_g"]], x[sl["P_m"]]
        P_l = self.loads_at(t, seg)
        th_l = x[sl["theta_l"]]
        if th_l.size:
            P_l = P_l.copy()
            P_l[self.load_idx] += th_l
        dx = np.empty_like(x)
        dx[sl["eta"]], dx[sl["omega_g"]] = grid_rhs(eta, w, Pm, P_l, self.model)
        if self.family == "none":
            dx[sl["P_m"]] = 0.0
            return dx

        th = x[sl["theta"]]
        Ps = x[sl["P_s"]]
        i1, i2 = self.idx1, self.idx2
        dPm = np.empty_like(Pm)
        dth = np.empty_like(th)

        coupling_l = None
        if self.family == "consensus":
            if th_l.size:
                coupling, coupling_l = joint_coupling(th, self.q, self.r, th_l, self.q_l, self.r_l,
                                                      self.laplacian)
            else:
                coupling = consensus_coupling(th, self.q, self.r, self.laplacian)
        elif self.family == "primal_dual":
            lam = x[sl["lambda"]]
            coupling = self.q * th + self.r - lam[: self.model.n_g]
        else:
            coupling = np.zeros_like(th)
            coupling_l = np.zeros_like(th_l)

        if i1.size:
            b = self.bank1
            dPm[i1] = tg1_rhs(Pm[i1], w[i1], th[i1], b)
            dth[i1] = consensus_rhs_order1(th[i1], Pm[i1], coupling[i1], b.T_theta, b.K_inv)
        if i2.size:
            b = self.bank2
            dPs, dPm[i2] = tg2_rhs(Ps, Pm[i2], w[i2], th[i2], b)
            dx[sl["P_s"]] = dPs
            dth[i2] = consensus_rhs_order2(th[i2], Ps, w[i2], coupling[i2], b.T_theta, b.K_inv, seg.gain)
        dx[sl["P_m"]] = dPm
        dx[sl["theta"]] = dth

        if self.family == "primal_dual":
            sc = self.scenario.controller
            dx[sl["v"]], dx[sl["lambda"]] = multiplier_rhs(
                x[sl["v"]], x[sl["lambda"]], th, self.loads_at(t, seg), self.model.B, sc.k_v, sc.k_lambda)
        if th_l.size:
            omega_l = derived_load_frequency(eta, P_l, self.model)
            dx[sl["theta_l"]] = load_controller_rhs(omega_l[self.load_idx], coupling_l, self.T_l)
        return dx

    def step(self, x: np.ndarray, t: float, dt: float) -> np.ndarray:
        """Advance by ``dt``, splitting at any breakpoint strictly inside the step."""
        t_end = t + dt
        inside = self.breakpoints[(self.breakpoints > t + _TIME_TOL) & (self.breakpoints < t_end - _TIME_TOL)]
        start = t
        for b in (*inside, t_end):
            x = rk4_step(self.rhs, start, x, b - start, self.segment(start))
            start = b
        return x

    def initial_state(self) -> SystemState:
        sc = self.scenario
        model = self.model
        P_l = sc.base_loads(0.0)
        opt = sc.optimum(0.0)
        P = np.asarray(opt.P_m_opt, dtype=float)
        total_l = P_l.copy()
        u = np.zeros(0)
        if sc.controller.loads:
            u = opt.u_l_opt
            total_l[self.load_idx] += u
        ss = solve_steady_state(P, total_l, model)
        parts = dict(eta=ss.eta, omega_g=np.full(model.n_g, ss.omega_star), P_m=P)
        if self.family != "none":
            parts.update(P_s=P[self.idx2], theta=P)
        if self.family == "primal_dual":
            parts["lambda"] = np.full(model.n, opt.lambda_opt)
            parts["v"] = np.linalg.pinv(model.B) @ np.concatenate([P, -P_l])
        if u.size:
            parts["theta_l"] = u
        return SystemState(self.layout.pack(**parts), self.layout)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    layout: StateLayout
    scenario: Scenario
    diverged: bool = False
    divergence_time: float | None = None

    def channel(self, name: str) -> np.ndarray:
        return self.states[:, self.layout.slices[name]]

    def base_loads(self) -> np.ndarray:
        return np.array([self.scenario.base_loads(t) for t in self.times]).reshape(len(self.times), -1)

    def controllable_load(self) -> np.ndarray:
        u = np.zeros((len(self.times), self.scenario.model.n_l))
        th_l = self.channel("theta_l")
        if th_l.shape[1]:
            idx = [c.load_index for c in self.scenario.controller.loads]
            u[:, idx] = th_l
        return u

    def omega_l(self) -> np.ndarray:
        P = self.base_loads() + self.controllable_load()
        return derived_load_frequency(self.channel("eta"), P, self.scenario.model)

    def frequencies(self) -> np.ndarray:
        return np.hstack([self.channel("omega_g"), self.omega_l()])

    def setpoints(self) -> np.ndarray:
        """θ when controllers are present, otherwise the frozen P_m."""
        th = self.channel("theta")
        return th if th.shape[1] else self.channel("P_m")

    def marginal_costs(self) -> np.ndarray:
        q, r, _ = cost_arrays(self.scenario.costs)
        return q * self.setpoints() + r

    def price_signal(self) -> np.ndarray:
        loads = self.scenario.controller.loads
        q, r, _ = cost_arrays(self.scenario.costs)
        if not loads:
            return q * self.setpoints() + r
        q_l = np.array([c.benefit.q for c in loads])
        r_l = np.array([c.benefit.r for c in loads])
        return np.array([price_signal(th, q, r, tl, q_l, r_l)
                         for th, tl in zip(self.setpoints(), self.channel("theta_l"))])

    @property
    def final(self) -> SystemState:
        return SystemState(self.states[-1].copy(), self.layout)


def initialize(scenario: Scenario) -> SystemState:
    """Steady state at the optimal dispatch for the initial loads."""
    return ClosedLoop(scenario).initial_state()


def step(state: SystemState, t: float, scenario: Scenario) -> SystemState:
    """One integration step of length ``scenario.dt`` starting at ``t``."""
    system = ClosedLoop(scenario)
    return SystemState(system.step(state.values, t, scenario.dt), state.layout)


def simulate(scenario: Scenario, initial: SystemState | None = None) -> Trajectory:
    system = ClosedLoop(scenario)
    x = (initial or system.initial_state()).values.copy()
    dt = scenario.dt
    n = int(np.floor(scenario.horizon / dt + _TIME_TOL))
    times = dt * np.arange(n + 1)
    states = np.empty((n + 1, x.size))
    states[0] = x
    bound = scenario.divergence_bound
    for k in range(n):
        x = system.step(x, times[k], dt)
        finite = np.all(np.isfinite(x))
        if finite:
            states[k + 1] = x
        if not finite or np.max(np.abs(x)) > bound:
            last = k + 2 if finite else k + 1
            log.info("%s diverged at t=%.4f", scenario.name, times[k + 1])
            return Trajectory(times[:last], states[:last], system.layout, scenario,
                              diverged=True, divergence_time=float(times[k + 1]))
    return Trajectory(times, states, system.layout, scenario)
