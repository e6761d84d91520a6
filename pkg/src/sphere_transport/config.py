"""Shared numerical configuration.

All tolerances live here so that the geometric layers stay free of magic
numbers. ``DEFAULT`` is treated as read-only; callers that need different
margins pass an explicit :class:`GeometryConfig`.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class GeometryConfig:
    #: rejection margin before the antipode, radians
    cut_margin: float = 1e-3
    #: switch to series evaluation of sin(t)/t and t/tan(t) below this angle
    small_angle: float = 1e-4
    #: unit-norm tolerance for points
    unit_norm_tol: float = 1e-12
    #: tangency tolerance for tangent vectors
    tangency_tol: float = 1e-12
    #: orthonormality tolerance for frames
    frame_tol: float = 1e-10
    #: eigenvalue floor below which symmetric operators count as singular
    eigen_floor: float = 1e-10
    #: distance below which the half-squared-distance Hessian degenerates
    degenerate_distance: float = 1e-8


DEFAULT = GeometryConfig()
