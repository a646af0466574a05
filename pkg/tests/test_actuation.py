import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from olfc.actuation import (
    TurbineGovernor,
    assemble_W,
    droop_certificate,
    droop_interval,
    schur_quadratic,
    tg1_rhs,
    tg2_rhs,
)
from olfc.integrate import integrate

# (T_s, T_m, D_g) of the bundled six-bus generators
CASE6 = [(4.0, 5.0, 3.4), (4.6, 6.7, 3.0), (5.0, 10.0, 4.2)]


def leading_minors_negdef(W):
    """Sylvester's criterion for -W, independent of any eigen-solver."""
    return all(np.linalg.det(-W[:k, :k]) > 0 for k in range(1, W.shape[0] + 1))


def test_validation():
    with pytest.raises(ValueError):
        TurbineGovernor(3, 1.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        TurbineGovernor(2, 1.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        TurbineGovernor(1, -1.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        TurbineGovernor(1, 1.0, float("inf"), 0.1)


def test_first_order_equilibrium_and_droop():
    u = TurbineGovernor(1, 2.0, 0.5, 0.1)
    assert tg1_rhs(1.0, 0.0, 1.0, u) == 0.0
    # a positive frequency deviation pulls generation down
    assert tg1_rhs(1.0, 0.1, 1.0, u) < 0


def test_second_order_step_matches_two_pole_response():
    T_s, T_m = 4.6, 6.7
    u = TurbineGovernor(2, T_m, 0.5, 0.1, T_s)

    def f(t, x):
        return np.array(tg2_rhs(x[0], x[1], 0.0, 1.0, u))

    t, X = integrate(f, np.zeros(2), 0.0, 30.0, 1e-2)
    P_s = 1 - np.exp(-t / T_s)
    P_m = 1 - (T_s * np.exp(-t / T_s) - T_m * np.exp(-t / T_m)) / (T_s - T_m)
    assert np.max(np.abs(X[:, 0] - P_s)) < 1e-9
    assert np.max(np.abs(X[:, 1] - P_m)) < 1e-9


def test_rhs_broadcasts_over_arrays():
    class Bank:
        T_m = np.array([5.0, 6.7])
        T_s = np.array([4.0, 4.6])
        K_inv = np.array([0.5, 0.5])

    dPs, dPm = tg2_rhs(np.zeros(2), np.ones(2), np.zeros(2), np.ones(2), Bank)
    assert dPs.shape == dPm.shape == (2,)
    assert np.allclose(dPs, 1 / Bank.T_s)


def test_case6_intervals():
    expected = [(-2.6816, 2.1816), (-2.4379, 1.5248), (-3.0976, 1.0976)]
    for (T_s, T_m, D), (lo, hi) in zip(CASE6, expected):
        got = droop_interval(T_s, T_m, D)
        assert got == pytest.approx((lo, hi), abs=1e-4)


def test_interval_endpoints_are_schur_roots():
    for T_s, T_m, D in CASE6:
        for end in droop_interval(T_s, T_m, D):
            assert abs(schur_quadratic(T_s, T_m, D, end)) < 1e-10


def test_prerequisite_failure_reported():
    cert = droop_certificate(1.0, 5.0, 3.0, 0.5)  # 4 T_s / T_m < 1
    assert cert.interval is None and not cert.holds
    assert any("4 T_s/T_m" in line for line in cert.diagnostics())
    cert = droop_certificate(4.0, 5.0, 1.0, 0.5)  # D T_s / T_m < 1
    assert not cert.damping_ratio_ok
    assert cert.to_dict()["holds"] is False


def test_certificate_diagnostic_names_interval():
    cert = droop_certificate(5.0, 10.0, 4.2, 2.0)
    assert not cert.holds and cert.prerequisites_hold
    assert "outside" in cert.diagnostics()[0]


def test_w_is_symmetric():
    W = assemble_W(4.0, 5.0, 3.4, 0.5)
    assert np.array_equal(W, W.T)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.2, 20), st.floats(0.2, 20), st.floats(0.2, 20), st.floats(-6, 6))
def test_eigen_test_matches_sylvester(T_s, T_m, D, K_inv):
    cert = droop_certificate(T_s, T_m, D, K_inv)
    W = cert.W
    if abs(cert.W_eigenvalues.max()) < 1e-8:
        return  # numerically on the boundary
    assert cert.W_negdef == leading_minors_negdef(W)
    if cert.prerequisites_hold:
        lo, hi = cert.interval
        if min(abs(K_inv - lo), abs(K_inv - hi)) > 1e-9:
            assert cert.holds == cert.W_negdef
