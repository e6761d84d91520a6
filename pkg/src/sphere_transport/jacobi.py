"""Geodesic deviation in block form and the small-step entropy expansion.

Along a sphere geodesic of speed ``rho``, the deviation field splits into
a component along the motion (linear in time) and orthogonal components
driven by the constant curvature operator ``rho^2 I``. The block solution
uses the matrix functions ``cos(t sqrt(S))`` and ``sin(t sqrt(S))/sqrt(S)``,
which are entire, so a symmetric positive semidefinite ``S`` is all that
is needed. A fourth-order Runge-Kutta integrator of the second-order
deviation equation serves as the reference for everything here, and is
the only machinery available for the ``custom`` curvature extension
point.

The same block solution yields the Hessian of half squared distance by
first variation, the quadratic (Lichnerowicz) form that the entropy of a
slightly transported measure approaches, and the individual expansion
terms used for order-of-convergence sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConjugatePoint, NotSymmetric
from .fields import ScalarField
from .entropy import mu_log_weights, _pointwise_terms
from .grids import Grid
from .sphere import frames_from_gradients
from .trig import one_minus_theta_cot, sinc, log_theta_over_sin

__all__ = [
    "CurvatureSpec",
    "BlockState",
    "matrix_trig",
    "jacobi_solve",
    "rk4_jacobi",
    "hessian_from_jacobi",
    "lichnerowicz_integral",
    "small_tau_expansion_terms",
]


@dataclass(frozen=True)
class CurvatureSpec:
    """Curvature data along a geodesic.

    ``constant_sphere`` is the implemented case: the operator acts as
    speed^2 times the identity on the orthogonal complement of the
    motion. ``custom`` carries a callable ``t -> S(t)`` (symmetric PSD,
    shape (n-1, n-1)) and is served by the reference integrator only.
    """

    kind: str = "constant_sphere"
    dim: int = 2
    s_of_t: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("constant_sphere", "custom"):
            raise ValueError(f"unknown curvature kind {self.kind!r}")
        if self.kind == "custom" and self.s_of_t is None:
            raise ValueError("custom curvature needs the operator function")
        if self.dim < 2:
            raise ValueError("sphere dimension must be at least 2")

    def orthogonal_block(self, speed: float, t: float = 0.0) -> np.ndarray:
        if self.kind == "constant_sphere":
            return speed**2 * np.eye(self.dim - 1)
        return np.asarray(self.s_of_t(t), dtype=float)


@dataclass
class BlockState:
    """Deviation field and its derivative at one time."""

    y: np.ndarray
    v: np.ndarray
    t: float = 1.0


def matrix_trig(t_matrix: np.ndarray, t: float = 1.0):
    """cos(t sqrt(T)) and sin(t sqrt(T))/sqrt(T) for symmetric PSD T.

    Both are entire functions of T, evaluated through the spectral
    decomposition with the series-protected scalar kernels, so T = 0
    returns (I, t I) exactly.
    """
    t_matrix = np.asarray(t_matrix, dtype=float)
    if t_matrix.ndim != 2 or t_matrix.shape[0] != t_matrix.shape[1]:
        raise NotSymmetric("matrix trigonometry needs a square matrix")
    if np.max(np.abs(t_matrix - t_matrix.T)) > 1e-12 * max(1.0, np.max(np.abs(t_matrix))):
        raise NotSymmetric("matrix is not symmetric within tolerance")
    eig, vec = np.linalg.eigh(t_matrix)
    if eig[0] < -1e-12:
        raise NotSymmetric("matrix trigonometry is restricted to positive semidefinite input")
    root = np.sqrt(np.clip(eig, 0.0, None))
    cos_part = (vec * np.cos(t * root)) @ vec.T
    sinc_part = (vec * (t * sinc(t * root))) @ vec.T
    return cos_part, sinc_part


def jacobi_solve(spec: CurvatureSpec, w: np.ndarray, speed: float, t: float = 1.0) -> BlockState:
    """Deviation field at time t with initial data Y(0) = 0, Y'(0) = w.

    ``w`` holds components in the geodesic-adapted frame: entry 0 along
    the motion, the rest orthogonal. The along component grows linearly;
    the orthogonal block follows the matrix trigonometric solution. For
    the round sphere the first conjugate point sits at speed pi, where
    the solution degenerates.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != spec.dim:
        raise ValueError(f"deviation data must have {spec.dim} components")
    if spec.kind == "constant_sphere" and speed * t >= np.pi:
        raise ConjugatePoint("geodesic reaches a conjugate point before the endpoint")
    s_block = spec.orthogonal_block(speed)
    cos_part, sinc_part = matrix_trig(s_block, t)
    y = np.empty_like(w)
    v = np.empty_like(w)
    y[0] = t * w[0]
    v[0] = w[0]
    y[1:] = sinc_part @ w[1:]
    v[1:] = cos_part @ w[1:]
    return BlockState(y=y, v=v, t=t)


def rk4_jacobi(spec: CurvatureSpec, w: np.ndarray, speed: float, steps: int = 10000) -> BlockState:
    """Reference integration of Y'' + R Y = 0 with classical Runge-Kutta.

    Treats the full (Y, V) block system with the curvature operator in
    the adapted frame; supports the custom curvature extension point.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    n = spec.dim
    h = 1.0 / steps

    def rhs(t, state):
        y, v = state[:n], state[n:]
        s_block = spec.orthogonal_block(speed, t)
        acc = np.zeros(n)
        acc[1:] = -s_block @ y[1:]
        return np.concatenate([v, acc])

    state = np.concatenate([np.zeros(n), w])
    t = 0.0
    for _ in range(steps):
        k1 = rhs(t, state)
        k2 = rhs(t + 0.5 * h, state + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, state + 0.5 * h * k2)
        k4 = rhs(t + h, state + h * k3)
        state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return BlockState(y=state[:n], v=state[n:], t=1.0)


def hessian_from_jacobi(spec: CurvatureSpec, speed: float) -> np.ndarray:
    """Half-squared-distance Hessian from the first variation identity.

    The quadratic form pairs V(1) against Y(1), so the matrix is
    V(1) Y(1)^{-1}: identity along the motion and
    sqrt(S)/tan(sqrt(S)) orthogonally. Matches the closed-form sphere
    Hessian at distance ``speed``.
    """
    if spec.kind != "constant_sphere":
        raise ValueError("closed-form Hessian is implemented for the round sphere")
    if speed >= np.pi:
        raise ConjugatePoint("no invertible deviation past the conjugate point")
    n = spec.dim
    s_block = spec.orthogonal_block(speed)
    eig, vec = np.linalg.eigh(s_block)
    root = np.sqrt(np.clip(eig, 0.0, None))
    ratio = 1.0 - one_minus_theta_cot(root)  # sqrt(S)/tan(sqrt(S)) eigenvalues
    out = np.eye(n)
    out[1:, 1:] = (vec * ratio) @ vec.T
    return out


def lichnerowicz_integral(psi: ScalarField, potential: ScalarField | None = None, n: int | None = None) -> float:
    """The quadratic form whose tau^2 multiple the entropy approaches.

    One half the integral of |Hess psi|_HS^2 + (n-1)|grad psi|^2 +
    <Hess U grad psi, grad psi> against the reference measure. The
    Hilbert-Schmidt norm is taken in an orthonormal tangent frame and is
    frame independent.
    """
    grid = psi.grid
    if n is None:
        n = grid.dim
    pts = grid.points
    g = psi.tangent_gradient(pts)
    rho2 = np.sum(g * g, axis=-1)
    frames = frames_from_gradients(pts, g)
    _, _, hess = psi.full(pts, frames)
    hs2 = np.einsum("nij,nij->n", hess, hess)
    if potential is None:
        cross = np.zeros(grid.n_points)
    else:
        cross = potential.hessian_quad(pts, g)
    w, _ = mu_log_weights(grid, potential)
    return 0.5 * math.fsum(w * (hs2 + (n - 1) * rho2 + cross))


def small_tau_expansion_terms(psi: ScalarField, tau: float, potential: ScalarField | None = None):
    """Integrated expansion terms of the rescaled map exp_x(tau grad psi).

    Returns ``(trace_i_minus_a, minus_log_jexp, minus_log_det2)`` for the
    potential ``tau psi``; each is quadratic in tau at leading order with
    coefficients trace(S)/3, trace(S)/6 and |Hess psi|_HS^2 / 2.
    """
    grid = psi.grid
    scaled = _scale_field(psi, tau)
    terms = _pointwise_terms(scaled, grid)
    w, _ = mu_log_weights(grid, potential)
    trace_ia = math.fsum(w * terms["trace_i_minus_a"])
    log_jexp = math.fsum(w * terms["log_jexp_term"])
    det2 = math.fsum(w * terms["det2_term"])
    return trace_ia, log_jexp, det2


def _scale_field(psi: ScalarField, factor: float) -> ScalarField:
    from .fields import PolynomialBackend

    if isinstance(psi.backend, PolynomialBackend):
        out = ScalarField.from_polynomial(psi.backend.poly.scale(factor), psi.grid, name=psi.name)
        return out
    return ScalarField.from_values(psi.grid, factor * psi.values, interpolation=psi.interpolation)
