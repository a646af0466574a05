"""Classical fourth-order Runge-Kutta on a uniform grid."""
from __future__ import annotations

import numpy as np


def rk4_step(f, t, x, dt, *args):
    k1 = f(t, x, *args)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1, *args)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2, *args)
    k4 = f(t + dt, x + dt * k3, *args)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(f, x0, t0, t1, dt, *args):
    """Return (times, states) sampled every ``dt`` from t0 to t1 inclusive."""
    n = int(np.floor((t1 - t0) / dt + 1e-9))
    times = t0 + dt * np.arange(n + 1)
    x = np.asarray(x0, dtype=float)
    out = np.empty((n + 1, x.size))
    out[0] = x
    for k in range(n):
        x = rk4_step(f, times[k], x, dt, *args)
        out[k + 1] = x
    return times, out
