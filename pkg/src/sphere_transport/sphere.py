"""Closed-form geometry of the unit sphere S^n embedded in R^{n+1}.

Points are unit vectors in R^{n+1} and tangent vectors at ``x`` live in the
hyperplane orthogonal to ``x``. Everything here (exponential and logarithm
maps, geodesic distance, the Jacobian of the exponential map, the Hessian
of half squared distance, and the Green's function on S^2) is evaluated in
closed form from the ambient embedding; no charts or metric tensors appear.

Two API levels coexist. The typed level (:class:`SpherePoint`,
:class:`TangentVector`, ...) validates its invariants on construction and
is what the operation contracts are stated against. The ``*_batch``
functions are the vectorized kernels underneath, operating on stacked
``(..., n+1)`` arrays; field-level pipelines call those directly.

Pairs at or beyond the cut locus (distance ``pi - cut_margin``) are
rejected rather than regularized. Results of the exponential map are
renormalized to keep the unit-norm invariant exact to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, GeometryConfig
from .errors import (
    BaseMismatch,
    CoincidentPoints,
    CutLocusViolation,
    DegenerateDistance,
)
from .trig import arccos_clamped, one_minus_theta_cot, sinc, theta_cot

__all__ = [
    "SpherePoint",
    "TangentVector",
    "TangentFrame",
    "SymOperator",
    "exp_map",
    "log_map",
    "geodesic_distance",
    "jacobian_exp",
    "hessian_half_dist_sq",
    "green_function",
    "green_gradient",
    "exp_map_batch",
    "log_map_batch",
    "distance_batch",
    "jacobian_exp_batch",
    "hessian_half_dist_sq_batch",
    "project_tangent",
    "frames_from_gradients",
    "complete_frame",
    "random_points",
    "random_tangents",
    "random_rotation",
]


# ---------------------------------------------------------------------------
# typed containers


@dataclass(frozen=True)
class SpherePoint:
    """A point on S^n, stored as a unit vector in R^{n+1}.

    ``dim`` is the intrinsic dimension n >= 2, so ``coords`` has length
    n + 1. The unit norm is validated to 1e-12 on construction.
    """

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "coords", c)
        if c.ndim != 1 or c.size < 3:
            raise ValueError("a sphere point needs at least 3 ambient coordinates")
        if abs(np.linalg.norm(c) - 1.0) > DEFAULT.unit_norm_tol:
            raise ValueError("coordinates are not unit norm within 1e-12")

    @property
    def dim(self) -> int:
        return self.coords.size - 1

    @classmethod
    def from_array(cls, arr, renormalize: bool = False) -> "SpherePoint":
        a = np.asarray(arr, dtype=float)
        if renormalize:
            a = a / np.linalg.norm(a)
        return cls(a)


@dataclass(frozen=True)
class TangentVector:
    """A vector in the tangent space at ``base``: orthogonal to it in R^{n+1}."""

    base: SpherePoint
    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=float)
        object.__setattr__(self, "vec", v)
        if v.shape != self.base.coords.shape:
            raise ValueError("tangent vector and base point have different shapes")
        if abs(float(self.base.coords @ v)) > max(DEFAULT.tangency_tol, 1e-12 * np.linalg.norm(v)):
            raise ValueError("vector is not tangent at the base point within 1e-12")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))


@dataclass(frozen=True)
class TangentFrame:
    """An orthonormal basis of the tangent space at ``base``.

    ``axes`` has shape (n, n+1); its Gram matrix must be the identity
    within 1e-10 and every axis must be tangent at ``base``.
    """

    base: SpherePoint
    axes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.axes, dtype=float)
        object.__setattr__(self, "axes", a)
        n = self.base.dim
        if a.shape != (n, n + 1):
            raise ValueError(f"frame must have shape ({n}, {n + 1})")
        gram = a @ a.T
        if np.max(np.abs(gram - np.eye(n))) > DEFAULT.frame_tol:
            raise ValueError("frame axes are not orthonormal within 1e-10")
        if np.max(np.abs(a @ self.base.coords)) > 1e-10:
            raise ValueError("frame axes are not tangent at the base point")


@dataclass(frozen=True)
class SymOperator:
    """A symmetric operator on a tangent space, expressed in a frame."""

    frame: TangentFrame
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        n = self.frame.base.dim
        if m.shape != (n, n):
            raise ValueError(f"operator matrix must be {n}x{n}")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > 1e-12 * scale:
            raise ValueError("operator matrix is not symmetric within 1e-12")

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def quadratic_form(self, tangent: TangentVector) -> float:
        comps = self.frame.axes @ tangent.vec
        return float(comps @ self.matrix @ comps)


# ---------------------------------------------------------------------------
# batch kernels


def project_tangent(points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Remove the normal component: v - <v, x> x."""
    dots = np.sum(points * vectors, axis=-1, keepdims=True)
    return vectors - dots * points


def exp_map_batch(
    points: np.ndarray,
    tangents: np.ndarray,
    config: GeometryConfig = DEFAULT,
    check: bool = True,
) -> np.ndarray:
    """exp_x(v) = cos(|v|) x + (sin|v|/|v|) v, renormalized.

    With ``check`` true, any |v| >= pi - cut_margin raises
    :class:`CutLocusViolation`.
    """
    rho = np.linalg.norm(tangents, axis=-1)
    if check and np.any(rho >= np.pi - config.cut_margin):
        raise CutLocusViolation(
            f"tangent norm {float(np.max(rho)):.6f} reaches the cut locus margin"
        )
    out = np.cos(rho)[..., None] * points + sinc(rho)[..., None] * tangents
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def distance_batch(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Geodesic distance arccos(<x, y>), clamped to [0, pi]."""
    return arccos_clamped(np.sum(x * y, axis=-1))


def log_map_batch(
    x: np.ndarray,
    y: np.ndarray,
    config: GeometryConfig = DEFAULT,
    check: bool = True,
) -> np.ndarray:
    """Inverse of the exponential map: the tangent at x pointing to y.

    Writes y = cos(d) x + sin(d) u with u the unit tangent direction, so
    the result is d * u. At d = 0 the zero vector is returned.
    """
    d = distance_batch(x, y)
    if check and np.any(d >= np.pi - config.cut_margin):
        raise CutLocusViolation(
            f"distance {float(np.max(d)):.6f} reaches the cut locus margin"
        )
    tangential = project_tangent(x, y)
    tnorm = np.linalg.norm(tangential, axis=-1)
    safe = np.where(tnorm > 0.0, tnorm, 1.0)
    return (d / safe)[..., None] * tangential


def jacobian_exp_batch(rho: np.ndarray, dim: int) -> np.ndarray:
    """Jacobian determinant (sin r / r)^(n-1) of exp at radius r on S^n."""
    return sinc(rho) ** (dim - 1)


def hessian_half_dist_sq_batch(
    x: np.ndarray,
    y: np.ndarray,
    frames: np.ndarray,
) -> np.ndarray:
    """Matrix of Hess_x d(x,y)^2 / 2 in the given tangent frames.

    The operator is (d/tan d) I plus a rank-one correction along the
    tangential direction of y, which restores eigenvalue 1 along the
    geodesic. ``frames`` has shape (..., n, n+1); the result is
    (..., n, n).
    """
    d = distance_batch(x, y)
    c = theta_cot(d)
    tangential = project_tangent(x, y)
    tnorm = np.linalg.norm(tangential, axis=-1, keepdims=True)
    unit = tangential / np.where(tnorm > 0.0, tnorm, 1.0)
    comps = np.einsum("...ij,...j->...i", frames, unit)
    n = frames.shape[-2]
    eye = np.eye(n)
    return c[..., None, None] * eye + (1.0 - c)[..., None, None] * (
        comps[..., :, None] * comps[..., None, :]
    )


def complete_frame(point: np.ndarray, seed: np.ndarray | None = None) -> np.ndarray:
    """Orthonormal tangent basis at one point, Gram-Schmidt from a seed.

    The first axis is the normalized tangential part of ``seed`` when one
    is given and nonzero; the rest come from projecting canonical basis
    vectors and orthonormalizing. Deterministic for fixed inputs.
    """
    m = point.size
    axes = []
    if seed is not None:
        s = project_tangent(point, np.asarray(seed, dtype=float))
        ns = np.linalg.norm(s)
        if ns > 1e-14:
            axes.append(s / ns)
    for k in range(m):
        if len(axes) == m - 1:
            break
        e = np.zeros(m)
        e[k] = 1.0
        v = e - (e @ point) * point
        for a in axes:
            v = v - (v @ a) * a
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            axes.append(v / nv)
    return np.array(axes)


def frames_from_gradients(points: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """Vectorized tangent frames whose first axis follows the gradient.

    ``points`` and ``gradients`` are (N, n+1); the result is (N, n, n+1).
    On S^2 the second axis is the cross product x times the unit gradient,
    matching the classical orthonormal basis construction there; for
    higher dimensions the remaining axes come from Gram-Schmidt over
    projected canonical vectors. Zero gradients fall back to a
    deterministic canonical-seeded frame.
    """
    points = np.asarray(points, dtype=float)
    gradients = np.asarray(gradients, dtype=float)
    N, m = points.shape
    n = m - 1
    g = project_tangent(points, gradients)
    gnorm = np.linalg.norm(g, axis=-1)
    degenerate = gnorm < 1e-13

    first = np.where(
        degenerate[:, None],
        _canonical_tangent(points),
        g / np.where(gnorm > 0.0, gnorm, 1.0)[:, None],
    )
    first = first / np.linalg.norm(first, axis=-1, keepdims=True)

    if m == 3:
        second = np.cross(points, first)
        return np.stack([first, second], axis=1)

    frames = np.zeros((N, n, m))
    frames[:, 0] = first
    count = np.ones(N, dtype=int)
    for k in range(m):
        done = count >= n
        if np.all(done):
            break
        e = np.zeros(m)
        e[k] = 1.0
        v = np.broadcast_to(e, (N, m)) - points[:, [k]] * points
        for j in range(n):
            has = (j < count)[:, None]
            axis = np.where(has, frames[:, j], 0.0)
            v = v - np.sum(v * axis, axis=-1, keepdims=True) * axis
        nv = np.linalg.norm(v, axis=-1)
        accept = (~done) & (nv > 1e-8)
        idx = np.nonzero(accept)[0]
        frames[idx, count[idx]] = v[idx] / nv[idx, None]
        count[idx] += 1
    if np.any(count < n):
        raise ValueError("frame completion failed; degenerate configuration")
    return frames


def _canonical_tangent(points: np.ndarray) -> np.ndarray:
    """A deterministic unit tangent: project the least-aligned axis vector."""
    k = np.argmin(np.abs(points), axis=-1)
    e = np.zeros_like(points)
    e[np.arange(points.shape[0]), k] = 1.0
    t = project_tangent(points, e)
    return t / np.linalg.norm(t, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# typed operations


def _require_same_base(x: SpherePoint, tau: TangentVector):
    if tau.base is not x and not np.array_equal(tau.base.coords, x.coords):
        raise BaseMismatch("tangent vector is based at a different point")


def exp_map(x: SpherePoint, tau: TangentVector, config: GeometryConfig = DEFAULT) -> SpherePoint:
    """Follow the geodesic from x with initial velocity tau for unit time."""
    _require_same_base(x, tau)
    if tau.norm >= np.pi - config.cut_margin:
        raise CutLocusViolation(
            f"|tau| = {tau.norm:.6f} >= pi - {config.cut_margin}"
        )
    return SpherePoint(exp_map_batch(x.coords, tau.vec, config=config, check=False))


def log_map(x: SpherePoint, y: SpherePoint, config: GeometryConfig = DEFAULT) -> TangentVector:
    """The tangent vector at x whose exponential reaches y."""
    return TangentVector(x, log_map_batch(x.coords, y.coords, config=config))


def geodesic_distance(x: SpherePoint, y: SpherePoint) -> float:
    """Arc length of the minimizing great circle between x and y."""
    return float(distance_batch(x.coords, y.coords))


def jacobian_exp(x: SpherePoint, tau: TangentVector) -> float:
    """Volume distortion of exp_x at tau: (sin|tau|/|tau|)^(n-1).

    Equals 1 at tau = 0 and decreases to 0 at the cut locus; values at
    |tau| >= pi are rejected.
    """
    _require_same_base(x, tau)
    rho = tau.norm
    if rho >= np.pi:
        raise CutLocusViolation("Jacobian of exp is evaluated only for |tau| < pi")
    return float(jacobian_exp_batch(np.asarray(rho), x.dim))


def hessian_half_dist_sq(
    x: SpherePoint,
    y: SpherePoint,
    frame: TangentFrame,
    config: GeometryConfig = DEFAULT,
) -> SymOperator:
    """Hessian of z -> d(z, y)^2 / 2 at x, in the given frame at x.

    Eigenvalue 1 along the geodesic direction toward y and d/tan(d) on the
    orthogonal complement. Positive definite for 0 < d < pi. Degenerate
    pairs (d below the floor) return the identity; pairs past the cut
    margin are rejected.
    """
    d = geodesic_distance(x, y)
    if d >= np.pi - config.cut_margin:
        raise DegenerateDistance(f"d = {d:.6f} reaches the cut locus margin")
    if d <= config.degenerate_distance:
        return SymOperator(frame, np.eye(x.dim))
    mat = hessian_half_dist_sq_batch(x.coords, y.coords, frame.axes)
    mat = 0.5 * (mat + mat.T)
    return SymOperator(frame, mat)


def green_function(b: SpherePoint, c: SpherePoint) -> float:
    """Green's function of the Laplacian on S^2.

    G(b, c) = -log(1 - cos d(b, c)) / (4 pi), symmetric in its arguments
    and singular at coincident points.
    """
    if b.dim != 2 or c.dim != 2:
        raise ValueError("the Green's function is defined on S^2 only")
    cosd = float(np.clip(b.coords @ c.coords, -1.0, 1.0))
    if 1.0 - cosd < 1e-15:
        raise CoincidentPoints("Green's function is singular at coincident points")
    return -np.log1p(-cosd) / (4.0 * np.pi)


def green_gradient(b: SpherePoint, c: SpherePoint) -> TangentVector:
    """Gradient of G(., c) at b, a tangent vector at the first argument."""
    if b.dim != 2 or c.dim != 2:
        raise ValueError("the Green's function is defined on S^2 only")
    cosd = float(np.clip(b.coords @ c.coords, -1.0, 1.0))
    if 1.0 - cosd < 1e-15:
        raise CoincidentPoints("Green's gradient is singular at coincident points")
    tangential = project_tangent(b.coords, c.coords)
    return TangentVector(b, tangential / (4.0 * np.pi * (1.0 - cosd)))


def green_gradient_batch(x: np.ndarray, sources: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Sum of signed-mass Green's gradients at each row of x.

    ``sources`` is (M, 3) and ``masses`` (M,); evaluation points must not
    coincide with any source.
    """
    dots = np.clip(x @ sources.T, -1.0, 1.0)
    if np.any(1.0 - dots < 1e-15):
        raise CoincidentPoints("evaluation point coincides with a source")
    tangential = sources[None, :, :] - dots[..., None] * x[:, None, :]
    coef = masses[None, :] / (4.0 * np.pi * (1.0 - dots))
    return np.sum(coef[..., None] * tangential, axis=1)


# ---------------------------------------------------------------------------
# random generators (testing and experiment plumbing)


def random_points(rng: np.random.Generator, count: int, dim: int = 2) -> np.ndarray:
    """Uniform points on S^dim via normalized Gaussians, shape (count, dim+1)."""
    v = rng.standard_normal((count, dim + 1))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_tangents(
    rng: np.random.Generator, points: np.ndarray, norms=None
) -> np.ndarray:
    """Random tangent vectors at the given points, optionally with set norms."""
    v = project_tangent(points, rng.standard_normal(points.shape))
    if norms is not None:
        unit = v / np.linalg.norm(v, axis=-1, keepdims=True)
        v = np.asarray(norms)[..., None] * unit
    return v


def random_rotation(rng: np.random.Generator, m: int) -> np.ndarray:
    """A Haar-random rotation matrix of R^m (determinant +1)."""
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
