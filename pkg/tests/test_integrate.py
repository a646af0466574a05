import numpy as np
import pytest
from scipy.linalg import expm

from olfc.integrate import integrate, rk4_step


def test_exact_for_cubic_quadrature():
    # with a time-only rhs RK4 reduces to Simpson's rule
    _, X = integrate(lambda t, x: np.array([t**3 - 2 * t]), np.zeros(1), 0.0, 2.0, 0.5)
    assert X[-1, 0] == pytest.approx(2.0**4 / 4 - 2.0**2, abs=1e-13)


def test_sample_grid_includes_endpoint():
    t, X = integrate(lambda t, x: -x, np.ones(1), 0.0, 1.0, 0.1)
    assert len(t) == 11 and t[-1] == pytest.approx(1.0)
    assert X.shape == (11, 1)


def test_single_step_local_error_is_fifth_order():
    A = np.array([[-1.0, 2.0], [-2.0, -1.0]])
    x0 = np.array([1.0, 0.5])
    errs = [np.abs(rk4_step(lambda t, x: A @ x, 0.0, x0, h) - expm(A * h) @ x0).max() for h in (0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(32, rel=0.1)


def test_extra_args_forwarded():
    _, X = integrate(lambda t, x, k: -k * x, np.ones(1), 0.0, 1.0, 1e-2, 3.0)
    assert X[-1, 0] == pytest.approx(np.exp(-3.0), rel=1e-7)
