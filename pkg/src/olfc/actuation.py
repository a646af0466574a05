"""Turbine-governor dynamics and the droop-constant certificate for the
second-order model.

The rhs functions broadcast: ``unit`` may be a single :class:`TurbineGovernor`
or any object exposing array-valued ``T_m``, ``T_s`` and ``K_inv``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEGDEF_THRESHOLD = -1e-12


@dataclass(frozen=True)
class TurbineGovernor:
    order: int
    T_m: float
    K_inv: float
    T_theta: float
    T_s: float | None = None

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"turbine-governor order must be 1 or 2, got {self.order}")
        if not (self.T_m > 0 and self.T_theta > 0):
            raise ValueError("time constants must be positive")
        if self.order == 2 and not (self.T_s is not None and self.T_s > 0):
            raise ValueError("second-order units need a positive governor time constant T_s")
        if not np.isfinite(self.K_inv):
            raise ValueError("droop coefficient K_inv must be finite")


def tg1_rhs(P_m, omega_g, theta, unit):
    """dP_m/dt of the first-order turbine-governor."""
    return (-P_m - unit.K_inv * omega_g + theta) / unit.T_m


def tg2_rhs(P_s, P_m, omega_g, theta, unit):
    """(dP_s/dt, dP_m/dt) of the governor/turbine cascade."""
    dP_s = (-P_s - unit.K_inv * omega_g + theta) / unit.T_s
    dP_m = (-P_m + P_s) / unit.T_m
    return dP_s, dP_m


def assemble_W(T_s, T_m, D_g, K_inv) -> np.ndarray:
    """Quadratic form of the generator/turbine dissipation in (ω, P_s-P_m, P_s-θ)."""
    a = -0.5 * K_inv - 0.5
    b = -0.5 * K_inv + 0.5
    return np.array([
        [-D_g, a, b],
        [a, -T_s / T_m, -0.5],
        [b, -0.5, -1.0],
    ])


def schur_quadratic(T_s, T_m, D_g, K_inv) -> float:
    """Schur complement of the lower-right block of W, written as a quadratic in K_inv."""
    rho = T_s / T_m
    num = 0.25 * rho * K_inv**2 + (0.5 - 0.5 * rho) * K_inv + 0.5 + 0.25 * rho
    return -D_g + num / (rho - 0.25)


def droop_alpha(T_s, T_m, D_g) -> float:
    return (T_m / T_s) ** 2 * (4 * T_s / T_m - 1) * (D_g * T_s / T_m - 1)


def droop_interval(T_s, T_m, D_g) -> tuple[float, float] | None:
    """Admissible open interval for K_inv, or None when the prerequisites fail."""
    if not (4 * T_s / T_m > 1 and D_g * T_s / T_m > 1):
        return None
    root = np.sqrt(droop_alpha(T_s, T_m, D_g))
    centre = 1 - T_m / T_s
    return (centre - root, centre + root)


@dataclass(frozen=True)
class DroopCertificate:
    T_s: float
    T_m: float
    D_g: float
    K_inv: float
    alpha: float
    interval: tuple[float, float] | None
    governor_ratio_ok: bool  # 4 T_s / T_m > 1
    damping_ratio_ok: bool  # D_g T_s / T_m > 1
    W: np.ndarray
    W_eigenvalues: np.ndarray
    W_negdef: bool

    @property
    def prerequisites_hold(self) -> bool:
        return self.governor_ratio_ok and self.damping_ratio_ok

    @property
    def in_interval(self) -> bool:
        if self.interval is None:
            return False
        lo, hi = self.interval
        return lo < self.K_inv < hi

    @property
    def holds(self) -> bool:
        return self.prerequisites_hold and self.in_interval

    def diagnostics(self) -> list[str]:
        out = []
        if not self.governor_ratio_ok:
            out.append(f"4 T_s/T_m = {4 * self.T_s / self.T_m:.4g} is not > 1")
        if not self.damping_ratio_ok:
            out.append(f"D_g T_s/T_m = {self.D_g * self.T_s / self.T_m:.4g} is not > 1")
        if self.prerequisites_hold and not self.in_interval:
            lo, hi = self.interval
            out.append(f"K_inv = {self.K_inv:.6g} outside ({lo:.6g}, {hi:.6g})")
        return out

    def to_dict(self) -> dict:
        return {
            "T_s": self.T_s,
            "T_m": self.T_m,
            "D_g": self.D_g,
            "K_inv": self.K_inv,
            "alpha": self.alpha,
            "interval": list(self.interval) if self.interval else None,
            "prerequisites_hold": bool(self.prerequisites_hold),
            "in_interval": bool(self.in_interval),
            "W": self.W.tolist(),
            "W_max_eigenvalue": float(self.W_eigenvalues.max()),
            "W_negdef": bool(self.W_negdef),
            "holds": bool(self.holds),
            "diagnostics": self.diagnostics(),
        }


def droop_certificate(T_s, T_m, D_g, K_inv) -> DroopCertificate:
    if not (T_s > 0 and T_m > 0 and D_g > 0):
        raise ValueError("T_s, T_m and D_g must be positive")
    W = assemble_W(T_s, T_m, D_g, K_inv)
    eig = np.linalg.eigvalsh(W)
    return DroopCertificate(
        T_s=float(T_s), T_m=float(T_m), D_g=float(D_g), K_inv=float(K_inv),
        alpha=float(droop_alpha(T_s, T_m, D_g)),
        interval=droop_interval(T_s, T_m, D_g),
        governor_ratio_ok=bool(4 * T_s / T_m > 1),
        damping_ratio_ok=bool(D_g * T_s / T_m > 1),
        W=W,
        W_eigenvalues=eig,
        W_negdef=bool(eig.max() < NEGDEF_THRESHOLD),
    )
