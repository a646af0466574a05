"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line."""
import json

import numpy as np
from click.testing import CliRunner
from scipy.linalg import expm

from olfc import droop_certificate
from olfc.analysis import dissipation_check, passivity_probe, run_metrics
from olfc.cli import main
from olfc.dispatch import brute_force_dispatch, optimal_dispatch
from olfc.integrate import integrate
from olfc.scenario import load_document


HORIZON = 80.0


def test_open_loop_common_frequency(open_loop_run, verdict):
    doc, _ = load_document("case6_open_loop")
    # independent arithmetic on the raw document: mismatch over total damping
    pre, post = (sum(e["loads"].values()) for e in doc["schedule"])
    damping = sum(b["D"] for b in doc["network"]["buses"])
    omega_star = (pre - post) / damping
    assert np.isclose(omega_star, -0.22 / 14.4, rtol=0, atol=1e-12)

    final = open_loop_run.frequencies()[-1]
    err = float(np.max(np.abs(final - omega_star)))
    verdict(1, "open-loop asymptotic common frequency", err <= 1e-5 and open_loop_run.times[-1] == HORIZON,
            f"max |omega_i(80) - omega*| = {err:.2e} (tol 1e-5, omega* = {omega_star:.8f})")


def test_dispatch_oracle_and_closed_loop(nominal, nominal_run, verdict):
    costs = nominal.costs
    closed = optimal_dispatch(costs, 3.61)
    brute = brute_force_dispatch(costs, 3.61, grid_resolution=0.01)
    oracle_err = float(np.max(np.abs(closed.P_m_opt - brute.P_m_opt)))
    frozen = np.array([0.80269, 1.77012, 1.03719])
    frozen_err = float(np.max(np.abs(closed.P_m_opt - frozen)))
    track_err = float(np.max(np.abs(nominal_run.channel("P_m")[-1] - closed.P_m_opt)))
    ok = oracle_err <= 1e-3 and frozen_err <= 1e-5 and track_err <= 1e-3 and not nominal_run.diverged
    verdict(2, "closed-form dispatch vs oracle and closed-loop tracking", ok,
            f"oracle gap {oracle_err:.2e}, closed-loop P_m error at 80 s {track_err:.2e} (tol 1e-3)")


def test_frequency_regulation(nominal_run, verdict):
    m = run_metrics(nominal_run, threshold=1e-3)
    ok = m.settling_time is not None and m.terminal_marginal_spread <= 1e-4
    verdict(3, "frequency regulation and marginal-cost consensus", ok,
            f"settles below 1e-3 pu {m.settling_time:.3f} s after the step, "
            f"terminal spread {m.terminal_marginal_spread:.2e} (tol 1e-4)")


def test_instability_reproduction(unstable_run, unit_gain_run, verdict):
    flagged = unstable_run.diverged and unstable_run.divergence_time <= HORIZON
    calm = run_metrics(unit_gain_run)
    converges = not unit_gain_run.diverged and calm.settling_time is not None
    peak = float(np.max(np.abs(unstable_run.states)))
    verdict(4, "gain 5 at generator 3 diverges, gain 1 converges", flagged and converges,
            f"gain 5: diverged={unstable_run.diverged}, max |x| = {peak:.3g} (bound 1e6); "
            f"gain 1: settled {calm.settling_time:.3f} s after the step")


def test_droop_certificate_agreement(verdict):
    rng = np.random.default_rng(7)
    draws = disagreements = 0
    while draws < 10_000:
        T_s, T_m, D = np.exp(rng.uniform(np.log(0.05), np.log(30.0), 3))
        if not (4 * T_s / T_m > 1 and D * T_s / T_m > 1):
            continue
        alpha = (T_m / T_s) ** 2 * (4 * T_s / T_m - 1) * (D * T_s / T_m - 1)
        lo, hi = 1 - T_m / T_s - np.sqrt(alpha), 1 - T_m / T_s + np.sqrt(alpha)
        K_inv = rng.uniform(lo - 0.5 * (hi - lo), hi + 0.5 * (hi - lo))
        if min(abs(K_inv - lo), abs(K_inv - hi)) < 1e-9:
            continue
        draws += 1
        cert = droop_certificate(T_s, T_m, D, K_inv)
        disagreements += cert.W_negdef != (lo < K_inv < hi)
    verdict(5, "eigenvalue test agrees with the closed-form interval", disagreements == 0,
            f"{disagreements} disagreements in {draws} draws")


def test_passivity_equality(nominal, verdict):
    opt = nominal.optimum(0.0)
    P_l = nominal.base_loads(0.0)

    def signal(t):
        return 0.2 * np.array([np.sin(3 * t), np.sin(5.1 * t + 0.3), np.cos(1.8 * t) - 1])

    coarse = passivity_probe(nominal.model, opt.P_m_opt, P_l, signal, horizon=10.0, dt=1e-3)
    fine = passivity_probe(nominal.model, opt.P_m_opt, P_l, signal, horizon=10.0, dt=5e-4)
    ratio = coarse.max_residual / fine.max_residual
    ok = coarse.max_residual <= 1e-5 and 3.5 <= ratio <= 4.5
    verdict(6, "network passivity equality", ok,
            f"residual {coarse.max_residual:.2e} at dt=1e-3 (tol 1e-5), ratio {ratio:.3f} on halving")


def test_lyapunov_monotonicity(nominal_run, unstable_run, alt_reading_unstable_run, verdict):
    nominal_report = dissipation_check(nominal_run)
    interior = nominal_report.Vdot[1:-1]
    after = nominal_run.times[1:-1] > 10.0
    nominal_ok = bool(np.all(interior <= 1e-6))
    destab = dissipation_check(unstable_run, allow_diverged=True)
    alt = dissipation_check(alt_reading_unstable_run, allow_diverged=True)
    verdict(7, "storage non-increasing on the nominal run, increasing on the destabilized run",
            nominal_ok and destab.first_violation_time is not None,
            f"nominal max Vdot {np.max(interior):.2e} (tol 1e-6), {np.max(interior[after]):.2e} after the step; gain-5 run first Vdot > 0 at "
            f"{destab.first_violation_time} (max {destab.max_Vdot:.2e}); "
            f"alternate-K gain-5 run first Vdot > 0 at {alt.first_violation_time}")


def test_integrator_order(verdict):
    A = np.array([[0.0, 1.0, 0.0], [-4.0, -0.4, 1.0], [0.0, 0.0, -1.5]])
    x0 = np.array([1.0, 0.0, 0.5])
    exact = expm(5.0 * A) @ x0
    errors = []
    for dt in (0.05, 0.025):
        _, X = integrate(lambda t, x: A @ x, x0, 0.0, 5.0, dt)
        errors.append(float(np.max(np.abs(X[-1] - exact))))
    ratio = errors[0] / errors[1]
    verdict(8, "fourth-order convergence of the integrator", ratio >= 14,
            f"errors {errors[0]:.3e} -> {errors[1]:.3e}, ratio {ratio:.2f} (need >= 14)")


def test_droop_reading_ledger(verdict):
    result = CliRunner().invoke(main, ["certify", "case6_nominal", "--json"])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    units = report["units"]
    both = all(set(u["readings"]) == {"K_inv", "K"} for u in units)
    default = report["default_reading"]
    passes = [u["readings"][default]["holds"] for u in units]
    alt = [u["readings"]["K"]["holds"] for u in units]
    text = CliRunner().invoke(main, ["certify", "case6_nominal"]).output
    lines = [ln for ln in text.splitlines() if "reading=" in ln]
    verdict(9, "certify reports both K readings, default passes everywhere",
            both and len(units) == 3 and all(passes) and len(lines) == 6,
            f"default reading {default!r}: {passes}; alternate reading: {alt}")
