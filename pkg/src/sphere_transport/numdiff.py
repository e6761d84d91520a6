"""Geodesic finite differences in local tangent frames.

These serve two roles: the differentiation backend for fields that exist
only as grid samples, and the independent oracle that analytic gradients
and Hessians are tested against. Stencils are fourth-order central
differences along geodesics through the base point, so the truncation
error is O(step^4) even where the target function has large higher
derivatives (for example near the cut locus).
"""

from __future__ import annotations

import numpy as np

from .sphere import exp_map_batch

__all__ = ["fd_tangent_gradient", "fd_hessian_frames"]


def _shifted(points, frames, axis, steps):
    """Points moved along geodesics in a frame direction, one per step."""
    direction = frames[:, axis, :]
    return [exp_map_batch(points, s * direction, check=False) for s in steps]


def fd_tangent_gradient(func, points, frames, step: float = 1e-5) -> np.ndarray:
    """Fourth-order central differences of ``func`` along each frame axis.

    ``func`` maps (N, m) points to (N,) values; the result is expressed as
    ambient vectors (N, m) lying in the tangent spaces.
    """
    points = np.asarray(points, dtype=float)
    n = frames.shape[1]
    grad = np.zeros_like(points)
    for a in range(n):
        p2, p1, m1, m2 = _shifted(points, frames, a, [2 * step, step, -step, -2 * step])
        deriv = (-func(p2) + 8.0 * func(p1) - 8.0 * func(m1) + func(m2)) / (12.0 * step)
        grad += deriv[:, None] * frames[:, a, :]
    return grad


def fd_hessian_frames(func, points, frames, step: float = 1e-3) -> np.ndarray:
    """Hessian matrices in the frames by fourth-order geodesic differences.

    Diagonal entries use the five-point second-difference stencil; mixed
    entries Richardson-extrapolate the cross stencil from steps h and 2h.
    Result shape (N, n, n).
    """
    points = np.asarray(points, dtype=float)
    N = points.shape[0]
    n = frames.shape[1]
    f0 = func(points)
    hess = np.zeros((N, n, n))
    for a in range(n):
        p2, p1, m1, m2 = _shifted(points, frames, a, [2 * step, step, -step, -2 * step])
        hess[:, a, a] = (
            -func(p2) + 16.0 * func(p1) - 30.0 * f0 + 16.0 * func(m1) - func(m2)
        ) / (12.0 * step * step)
    for a in range(n):
        for b in range(a + 1, n):
            def cross(h):
                da = frames[:, a, :]
                db = frames[:, b, :]
                pp = exp_map_batch(points, h * (da + db), check=False)
                mm = exp_map_batch(points, -h * (da + db), check=False)
                pm = exp_map_batch(points, h * (da - db), check=False)
                mp = exp_map_batch(points, -h * (da - db), check=False)
                return (func(pp) + func(mm) - func(pm) - func(mp)) / (4.0 * h * h)

            val = (4.0 * cross(step) - cross(2.0 * step)) / 3.0
            hess[:, a, b] = val
            hess[:, b, a] = val
    return hess
