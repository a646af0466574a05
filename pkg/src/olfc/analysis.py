"""Numerical checks of the stability certificates along simulated trajectories.

Storage values are evaluated on stored samples and differentiated by central
differences, so the checks do not reuse the right-hand side they certify.
The analytic rate (:func:`modeled_storage_rate`) is computed separately from
the dissipation identities and compared against the finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actuation import assemble_W
from .dispatch import cost_arrays
from .grid import NetworkModel, derived_load_frequency, grid_rhs, solve_steady_state
from .integrate import integrate
from .simulation import ClosedLoop, Scenario, Trajectory

VDOT_SLACK = 1e-6
REFERENCE_TOL = 1e-8


@dataclass(frozen=True)
class Reference:
    """Equilibrium the storage functions are centred on."""

    eta: np.ndarray
    omega: float  # common frequency of every bus
    P_m: np.ndarray
    theta: np.ndarray | None = None
    v: np.ndarray | None = None
    lam: np.ndarray | None = None
    theta_l: np.ndarray | None = None
    P_l: np.ndarray | None = None

    def omega_g(self, n_g: int) -> np.ndarray:
        return np.full(n_g, self.omega)


def reference_for(scenario: Scenario, t: float | None = None,
                  initial_v: np.ndarray | None = None) -> Reference:
    """Optimal equilibrium for the loads active at ``t`` (default: after the last event).

    With ``family == "none"`` the generation stays at its initial optimum and
    the reference is the resulting (possibly off-nominal) synchronous state.
    """
    t = scenario.schedule.last_event if t is None else t
    model = scenario.model
    P_l = scenario.base_loads(t)
    ctrl = scenario.controller
    if ctrl.family == "none":
        P = np.asarray(scenario.optimum(0.0).P_m_opt)
        ss = solve_steady_state(P, P_l, model)
        return Reference(ss.eta, ss.omega_star, P, P_l=P_l)

    opt = scenario.optimum(t)
    P = np.asarray(opt.P_m_opt, dtype=float)
    total = P_l.copy()
    theta_l = None
    if ctrl.loads:
        theta_l = np.asarray(opt.u_l_opt, dtype=float)
        total[[c.load_index for c in ctrl.loads]] += theta_l
    ss = solve_steady_state(P, total, model)
    v = lam = None
    if ctrl.family == "primal_dual":
        lam = np.full(model.n, opt.lambda_opt)
        target = np.concatenate([P, -P_l])
        pinv = np.linalg.pinv(model.B)
        if initial_v is None:
            v = pinv @ target
        else:
            # v only moves inside Im(Bᵀ); keep the conserved cycle component
            v = initial_v + pinv @ (target - model.B @ initial_v)
    return Reference(ss.eta, ss.omega_star, P, theta=P, v=v, lam=lam, theta_l=theta_l, P_l=P_l)


def reference_state(system: ClosedLoop, ref: Reference) -> np.ndarray:
    layout = system.layout
    n_g = system.model.n_g
    parts = dict(eta=ref.eta, omega_g=ref.omega_g(n_g), P_m=ref.P_m)
    if layout.length("theta"):
        parts.update(theta=ref.theta, P_s=ref.P_m[system.idx2])
    if layout.length("v"):
        parts.update(v=ref.v, **{"lambda": ref.lam})
    if layout.length("theta_l"):
        parts["theta_l"] = ref.theta_l
    return layout.pack(**parts)


def check_reference(scenario: Scenario, ref: Reference, t: float | None = None) -> float:
    """Max |rhs| at the reference for the segment active at ``t``; raises if not an equilibrium."""
    t = scenario.schedule.last_event if t is None else t
    system = ClosedLoop(scenario)
    seg = system.segment(t)
    res = float(np.max(np.abs(system.rhs(t, reference_state(system, ref), seg)), initial=0.0))
    if res > REFERENCE_TOL:
        raise ValueError(f"reference is not a steady state (max |rhs| = {res:.3e})")
    return res


def storage_U(eta, omega_g, ref: Reference, model: NetworkModel):
    """Incremental network storage: kinetic energy plus the Bregman distance of -Σγcos(η)."""
    dw = np.asarray(omega_g) - ref.omega
    g = model.gamma
    kinetic = 0.5 * np.sum(model.M * dw**2, axis=-1)
    potential = (-np.sum(g * np.cos(eta), axis=-1) + np.sum(g * np.cos(ref.eta))
                 - (np.asarray(eta) - ref.eta) @ (g * np.sin(ref.eta)))
    return kinetic + potential


def storage_Z1(theta, P_m, theta_ref, P_m_ref, T_theta, T_m, K_inv):
    K = 1.0 / K_inv
    return 0.5 * K * (T_theta * (theta - theta_ref) ** 2 + T_m * (P_m - P_m_ref) ** 2)


def storage_Z2(theta, P_s, P_m, theta_ref, P_s_ref, T_theta, T_s):
    return (0.5 * T_theta * (theta - theta_ref) ** 2 + 0.5 * T_s * (P_s - P_s_ref) ** 2
            + 0.5 * T_s * (P_m - P_s) ** 2)


def storage_multipliers(v, lam, v_ref, lam_ref, k_v=1.0, k_lambda=1.0):
    """Storage of the primal-dual virtual flows and multipliers."""
    return (0.5 * np.sum((v - v_ref) ** 2, axis=-1) / k_v
            + 0.5 * np.sum((lam - lam_ref) ** 2, axis=-1) / k_lambda)


def storage_loads(theta_l, theta_l_ref, T_theta):
    """Storage of the controllable-load setpoints."""
    return 0.5 * np.sum(T_theta * (theta_l - theta_l_ref) ** 2, axis=-1)


def central_difference(values, dt):
    out = np.full(len(values), np.nan)
    if len(values) >= 3:
        out[1:-1] = (values[2:] - values[:-2]) / (2 * dt)
    return out


@dataclass
class StorageReport:
    times: np.ndarray
    U: np.ndarray
    Z1: np.ndarray  # (T, n order-1 units)
    Z2: np.ndarray  # (T, n order-2 units)
    Z3: np.ndarray  # multipliers or controllable loads; zeros when absent
    V: np.ndarray
    Vdot: np.ndarray  # central differences, NaN at the ends
    Vdot_model: np.ndarray  # dissipation identities evaluated pointwise
    slack: float
    decomposition_residual: float
    max_Vdot: float
    first_violation_time: float | None
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.first_violation_time is None

    def summary(self) -> dict:
        return {
            "V_initial": float(self.V[0]),
            "V_final": float(self.V[-1]),
            "max_Vdot": self.max_Vdot,
            "slack": self.slack,
            "first_violation_time": self.first_violation_time,
            "decomposition_residual": self.decomposition_residual,
            "monotone": self.passed,
        }


def storage_series(traj: Trajectory, ref: Reference) -> dict[str, np.ndarray]:
    sc = traj.scenario
    model = sc.model
    system = ClosedLoop(sc)
    T = len(traj.times)
    U = storage_U(traj.channel("eta"), traj.channel("omega_g"), ref, model)
    Z1 = np.zeros((T, len(system.idx1)))
    Z2 = np.zeros((T, len(system.idx2)))
    Z3 = np.zeros(T)
    if sc.controller.family != "none":
        th, Pm, Ps = traj.channel("theta"), traj.channel("P_m"), traj.channel("P_s")
        i1, i2 = system.idx1, system.idx2
        if i1.size:
            b = system.bank1
            Z1 = storage_Z1(th[:, i1], Pm[:, i1], ref.theta[i1], ref.P_m[i1], b.T_theta, b.T_m, b.K_inv)
        if i2.size:
            b = system.bank2
            Z2 = storage_Z2(th[:, i2], Ps, Pm[:, i2], ref.theta[i2], ref.P_m[i2], b.T_theta, b.T_s)
        if sc.controller.family == "primal_dual":
            Z3 = storage_multipliers(traj.channel("v"), traj.channel("lambda"), ref.v, ref.lam,
                                     sc.controller.k_v, sc.controller.k_lambda)
        if sc.controller.loads:
            Z3 = storage_loads(traj.channel("theta_l"), ref.theta_l, system.T_l)
    V = U + Z1.sum(axis=1) + Z2.sum(axis=1) + Z3
    return {"U": U, "Z1": Z1, "Z2": Z2, "Z3": Z3, "V": V}


def modeled_storage_rate(traj: Trajectory, ref: Reference) -> np.ndarray:
    """Storage rate assembled from the per-block dissipation identities.

    Network damping, first-order ``-Dω² - K(θ-P_m)²``, the second-order
    quadratic forms in W, the communication term ``-Δpᵀ L Δp`` (or ``-Σ qΔθ²``
    for primal-dual), plus the extra work done by any frequency-gain override.
    """
    sc = traj.scenario
    model = sc.model
    system = ClosedLoop(sc)
    w = traj.channel("omega_g")
    P_total = traj.base_loads() + traj.controllable_load()
    omega_l = derived_load_frequency(traj.channel("eta"), P_total, model)
    rate = -np.sum(model.D_l * (omega_l - ref.omega) ** 2, axis=1)
    if sc.controller.family == "none":
        dw = w - ref.omega
        rate += -np.sum(model.D_g * dw**2, axis=1) + np.sum(dw * (traj.channel("P_m") - ref.P_m), axis=1)
        return rate

    th, Pm, Ps = traj.channel("theta"), traj.channel("P_m"), traj.channel("P_s")
    i1, i2 = system.idx1, system.idx2
    if i1.size:
        K = 1.0 / system.bank1.K_inv
        rate += np.sum(-model.D_g[i1] * w[:, i1] ** 2 - K * (th[:, i1] - Pm[:, i1]) ** 2, axis=1)
    if i2.size:
        b = system.bank2
        x = np.stack([w[:, i2], Ps - Pm[:, i2], Ps - th[:, i2]], axis=2)  # (T, n2, 3)
        for k, unit in enumerate(i2):
            W = assemble_W(b.T_s[k], b.T_m[k], model.D_g[unit], b.K_inv[k])
            rate += np.einsum("ti,ij,tj->t", x[:, k], W, x[:, k])
        for k, gain, start in system.overrides:
            active = traj.times + 1e-9 >= start
            unit = i2[k]
            extra = -(gain - 1.0) * (1 - b.K_inv[k]) * w[:, unit] * (th[:, unit] - ref.theta[unit])
            rate += np.where(active, extra, 0.0)

    family = sc.controller.family
    if family == "consensus":
        dp = traj.price_signal() - _reference_price(sc, ref)
        rate -= np.einsum("ti,ij,tj->t", dp, system.laplacian, dp)
    elif family == "primal_dual":
        q, _, _ = cost_arrays(sc.costs)
        rate -= np.sum(q * (th - ref.theta) ** 2, axis=1)
    return rate


def _reference_price(sc: Scenario, ref: Reference) -> np.ndarray:
    q, r, _ = cost_arrays(sc.costs)
    p = q * ref.theta + r
    if sc.controller.loads:
        q_l = np.array([c.benefit.q for c in sc.controller.loads])
        r_l = np.array([c.benefit.r for c in sc.controller.loads])
        p = np.concatenate([p, r_l - q_l * ref.theta_l])
    return p


def dissipation_check(traj: Trajectory, ref: Reference | None = None,
                      slack: float = VDOT_SLACK, t_from: float | None = None,
                      allow_diverged: bool = False) -> StorageReport:
    """Verify the composite storage is non-increasing along ``traj``.

    ``t_from`` restricts the monotonicity test to later samples; by default the
    whole trajectory is checked. The decomposition residual skips samples
    adjacent to a breakpoint, where the rate jumps, and samples whose loads
    differ from the reference loads. Diverged runs
    are rejected unless ``allow_diverged`` is set, in which case the samples up
    to divergence are examined.
    """
    sc = traj.scenario
    if traj.diverged and not allow_diverged:
        raise ValueError("dissipation check needs a non-diverged trajectory")
    if ref is None:
        v0 = traj.channel("v")[0] if traj.layout.length("v") else None
        ref = reference_for(sc, initial_v=v0)
    check_reference(sc, ref)

    parts = storage_series(traj, ref)
    dt = sc.dt
    Vdot = central_difference(parts["V"], dt)
    model_rate = modeled_storage_rate(traj, ref)

    t = traj.times
    mask = np.isfinite(Vdot)
    if t_from is not None:
        mask &= t >= t_from
    smooth = np.isfinite(Vdot)
    for b in ClosedLoop(sc).breakpoints:
        smooth &= np.abs(t - b) > 1.5 * dt
    if ref.P_l is not None:
        # the block identities assume the loads the reference was built for
        smooth &= np.all(np.abs(traj.base_loads() - ref.P_l) < 1e-12, axis=1)
    resid = float(np.max(np.abs(Vdot[smooth] - model_rate[smooth]), initial=0.0))
    max_vdot = float(np.max(Vdot[mask], initial=-np.inf))
    bad = np.flatnonzero(mask & (np.nan_to_num(Vdot, nan=-np.inf) > slack))
    first = float(t[bad[0]]) if bad.size else None
    return StorageReport(t, parts["U"], parts["Z1"], parts["Z2"], parts["Z3"], parts["V"], Vdot,
                         model_rate, slack, resid, max_vdot, first)


@dataclass
class ProbeResult:
    times: np.ndarray
    U: np.ndarray
    Udot: np.ndarray  # central differences
    supply: np.ndarray  # -|Δω_g|²_Dg - |Δω_l|²_Dl + Δω_gᵀΔP_m
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.nanmax(np.abs(self.residual)))


def passivity_probe(model: NetworkModel, P_m_bar, P_l, input_signal, horizon: float = 10.0,
                    dt: float = 1e-3) -> ProbeResult:
    """Drive the open-loop network with ``P_m = P̄_m + input_signal(t)`` from its
    equilibrium and compare the storage rate with the supply rate pointwise."""
    P_m_bar = np.asarray(P_m_bar, dtype=float)
    P_l = np.asarray(P_l, dtype=float)
    ss = solve_steady_state(P_m_bar, P_l, model)
    ref = Reference(ss.eta, ss.omega_star, P_m_bar)
    m, n_g = model.m, model.n_g

    def f(t, x):
        d_eta, d_w = grid_rhs(x[:m], x[m:], P_m_bar + input_signal(t), P_l, model)
        return np.concatenate([d_eta, d_w])

    x0 = np.concatenate([ss.eta, np.full(n_g, ss.omega_star)])
    times, X = integrate(f, x0, 0.0, horizon, dt)
    eta, w = X[:, :m], X[:, m:]
    U = storage_U(eta, w, ref, model)
    Udot = central_difference(U, dt)
    dPm = np.array([input_signal(t) for t in times]).reshape(len(times), -1)
    omega_l = derived_load_frequency(eta, P_l, model)
    dw = w - ss.omega_star
    supply = (-np.sum(model.D_g * dw**2, axis=1) - np.sum(model.D_l * (omega_l - ss.omega_star) ** 2, axis=1)
              + np.sum(dw * dPm, axis=1))
    return ProbeResult(times, U, Udot, supply, Udot - supply)


@dataclass
class RunMetrics:
    diverged: bool
    divergence_time: float | None
    settling_time: float | None  # measured from the last load change
    terminal_max_frequency: float
    terminal_marginal_spread: float | None
    dispatch_error: float | None
    security_violations: int
    threshold: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def settling_time(times, freq_inf, t0: float, threshold: float) -> float | None:
    after = times >= t0 - 1e-9
    if not np.any(after):
        return None
    tail = freq_inf[after]
    # running sup from the end backwards
    sup_from = np.maximum.accumulate(tail[::-1])[::-1]
    ok = np.flatnonzero(sup_from < threshold)
    if ok.size == 0:
        return None
    return float(times[after][ok[0]] - t0)


def run_metrics(traj: Trajectory, threshold: float = 1e-3) -> RunMetrics:
    sc = traj.scenario
    freq = np.abs(traj.frequencies()).max(axis=1)
    eta = traj.channel("eta")
    violations = int(np.sum(np.any(np.abs(eta) >= np.pi / 2, axis=1)))
    if traj.diverged:
        return RunMetrics(True, traj.divergence_time, None, float(freq[-1]), None, None,
                          violations, threshold)
    t0 = sc.schedule.last_event
    settle = settling_time(traj.times, freq, t0, threshold)
    spread = float(np.ptp(traj.price_signal()[-1]))
    P_opt = np.asarray(sc.optimum(traj.times[-1]).P_m_opt)
    err = float(np.max(np.abs(traj.channel("P_m")[-1] - P_opt)))
    return RunMetrics(False, None, settle, float(freq[-1]), spread, err, violations, threshold)


def linearized_spectrum(scenario: Scenario, t: float | None = None, h: float = 1e-7,
                        zero_tol: float = 1e-6) -> np.ndarray:
    """Eigenvalues of the finite-difference Jacobian at the optimal equilibrium.

    Eigenvalues below ``zero_tol`` in magnitude belong to the conserved
    directions (line-angle cycles, primal-dual cycle flows) and are dropped.
    """
    t = scenario.schedule.last_event if t is None else t
    system = ClosedLoop(scenario)
    ref = reference_for(scenario, t)
    x0 = reference_state(system, ref)
    seg = system.segment(t)
    J = np.empty((x0.size, x0.size))
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = h
        J[:, i] = (system.rhs(t, x0 + e, seg) - system.rhs(t, x0 - e, seg)) / (2 * h)
    ev = np.linalg.eigvals(J)
    return ev[np.abs(ev) > zero_tol]

