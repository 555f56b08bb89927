"""Continuous-time Kalman filter for the linear-Gaussian model.

For dX = a X dt + s dB, dY = c X dt + dW with X_0 ~ N(m_0, P_0), the
conditional law of X_t given F_t^Y is N(m_t, P_t) with

    dm = a m dt + c P (dY - c m dt),      P' = 2 a P + s^2 - c^2 P^2.

Integrated on the observation grid, this is an exact oracle for particle
estimates of the conditional mean on the same path.
"""

import numpy as np

from .models import FilterModel


def kalman_filter(model: FilterModel, y_path: np.ndarray):
    """Run the Kalman--Bucy recursion on a fine-grid observation path.

    Requires a model with params {a, sigma, c, m0, p0} and e = d = 1.
    Returns (mean_path, var_path), each of shape (n + 1,) on the y grid.
    """
    p = model.params
    try:
        a, s, c = p["a"], p["sigma"], p["c"]
        m, P = p["m0"], p["p0"]
    except KeyError:
        raise ValueError(f"model {model.name!r} has no Kalman parameters") from None
    y_path = np.asarray(y_path)
    n = y_path.shape[0] - 1
    dt = 1.0 / n
    dY = np.diff(y_path[:, 0])
    means = np.empty(n + 1)
    variances = np.empty(n + 1)
    means[0], variances[0] = m, P
    for k in range(n):
        m = m + a * m * dt + c * P * (dY[k] - c * m * dt)
        P = P + (2.0 * a * P + s * s - c * c * P * P) * dt
        means[k + 1] = m
        variances[k + 1] = P
    return means, variances
