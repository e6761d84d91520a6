"""Series-protected scalar helpers shared by the geometry and entropy layers.

The closed forms ``sin(t)/t``, ``t/tan(t)``, ``1 - t/tan(t)`` and
``log(t/sin(t))`` all lose relative accuracy near ``t = 0`` because they
subtract nearly equal quantities. Each function below switches to a short
even Maclaurin series below a threshold chosen so the truncation error is
under 1e-16, and the difference forms keep their exact leading coefficient
so that derived quantities such as ``K(a) - a^2/2`` keep their sign in
floating point.

All functions accept scalars or ndarrays and are elementwise.
"""

from __future__ import annotations

import numpy as np

# closed forms are safe above these angles, series are exact enough below
_SINC_SWITCH = 1e-4
_DIFF_SWITCH = 0.05


def sinc(theta):
    """sin(theta)/theta with the removable singularity filled in."""
    t = np.asarray(theta, dtype=float)
    t2 = t * t
    small = np.abs(t) < _SINC_SWITCH
    safe = np.where(small, 1.0, t)
    closed = np.sin(safe) / safe
    series = 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0)
    return np.where(small, series, closed)


def one_minus_theta_cot(theta):
    """1 - theta/tan(theta), nonnegative on [0, pi)."""
    t = np.asarray(theta, dtype=float)
    t2 = t * t
    small = np.abs(t) < _DIFF_SWITCH
    safe = np.where(small, 1.0, t)
    closed = 1.0 - safe * np.cos(safe) / np.sin(safe)
    series = t2 * (
        1.0 / 3.0
        + t2 * (1.0 / 45.0 + t2 * (2.0 / 945.0 + t2 * (1.0 / 4725.0 + t2 * (2.0 / 93555.0))))
    )
    return np.where(small, series, closed)


def theta_cot(theta):
    """theta/tan(theta), equal to 1 at 0."""
    return 1.0 - one_minus_theta_cot(theta)


def log_theta_over_sin(theta):
    """log(theta/sin(theta)), nonnegative on [0, pi)."""
    t = np.asarray(theta, dtype=float)
    t2 = t * t
    small = np.abs(t) < _DIFF_SWITCH
    safe = np.where(small, 1.0, t)
    closed = np.log(safe / np.sin(safe))
    series = t2 * (
        1.0 / 6.0
        + t2 * (1.0 / 180.0 + t2 * (1.0 / 2835.0 + t2 * (1.0 / 37800.0 + t2 / 467775.0)))
    )
    return np.where(small, series, closed)


def log_sinc(theta):
    """log(sin(theta)/theta), nonpositive on [0, pi)."""
    return -log_theta_over_sin(theta)


def arccos_clamped(dot):
    """arccos with the argument clipped to [-1, 1] against roundoff."""
    return np.arccos(np.clip(dot, -1.0, 1.0))
