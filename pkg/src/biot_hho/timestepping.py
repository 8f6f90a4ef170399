"""BDF weights and time averaging of separable data."""

from __future__ import annotations

import numpy as np

# delta_t^n x = (1/tau) * sum_j BDF_WEIGHTS[m][j] * x^{n-j}
BDF_WEIGHTS = {
    1: (1.0, -1.0),
    2: (1.5, -2.0, 0.5),
    3: (11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0),
    4: (25.0 / 12.0, -4.0, 3.0, -4.0 / 3.0, 0.25),
}


def bdf_weights(order):
    if order not in BDF_WEIGHTS:
        raise ValueError(f"BDF order must be in 1..4, got {order}")
    return np.array(BDF_WEIGHTS[order])


def time_average(fun, t0, t1, order=1):
    """(1/(t1-t0)) int_{t0}^{t1} fun(t) dt by Gauss-Legendre of exactness >= 2*order + 1.

    ``fun`` may return arrays; values are combined along a new leading axis.
    """
    npts = order + 1
    s, w = np.polynomial.legendre.leggauss(npts)
    ts = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * s
    vals = np.stack([np.asarray(fun(t), dtype=float) for t in ts])
    return 0.5 * np.tensordot(w, vals, axes=(0, 0))


def time_average_sources(f, g, n, tau, order=1):
    """Averages of the separable sources ``f`` and ``g`` over (t^{n-1}, t^n):
    returns the two coefficient vectors of their time factors."""
    t0, t1 = (n - 1) * tau, n * tau
    return f.averaged_coefficients(t0, t1, order + 1), g.averaged_coefficients(t0, t1, order + 1)
