"""Structured quadrature grids on S^2 and S^3.

The workhorse is the Gauss-Legendre colatitude grid: nodes placed at the
Legendre roots in cos(colatitude) crossed with uniform longitudes. Its
weights are normalized so the quadrature integrates against the rotation
invariant probability measure, and it is exact for polynomial restrictions
(spherical harmonics) up to the bandlimit.

S^3 grids are built in Hopf coordinates
``p = (cos(e) cos(a), cos(e) sin(a), sin(e) cos(b), sin(e) sin(b))``
with Gauss-Legendre nodes in cos(2e) and two uniform angles, which keeps
the same polynomial exactness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionUnsupported

__all__ = [
    "GridSpec",
    "Grid",
    "build_grid",
    "fibonacci_sphere",
    "hopf_lattice",
    "systematic_sample",
    "equal_area_bin_index",
]

GAUSS_LEGENDRE = "gauss_legendre_colatitude"
UNIFORM_LONLAT = "uniform_lonlat"


@dataclass(frozen=True)
class GridSpec:
    """Declarative description of a structured sphere grid.

    ``n_colat`` counts colatitude nodes and ``n_lon`` uniform longitude
    nodes; for dim 3 the extra uniform angle reuses ``n_lon``.
    """

    kind: str = GAUSS_LEGENDRE
    n_colat: int = 64
    n_lon: int = 128
    dim: int = 2

    def __post_init__(self):
        if self.kind not in (GAUSS_LEGENDRE, UNIFORM_LONLAT):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise DimensionUnsupported("grids are provided for S^2 and S^3")
        if self.kind == UNIFORM_LONLAT and self.dim != 2:
            raise DimensionUnsupported("uniform_lonlat grids are S^2 only")
        if self.n_colat < 2 or self.n_lon < 4:
            raise ValueError("grid is too small")


class Grid:
    """Realized grid: embedded points, weights and angular structure.

    Points are stored colatitude-major: index = i * n_lon + j on S^2 and
    (i * n_lon + j) * n_lon + k on S^3. Weights are positive and sum to 1.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        if spec.dim == 2:
            if spec.kind == GAUSS_LEGENDRE:
                u, glw = np.polynomial.legendre.leggauss(spec.n_colat)
                order = np.argsort(-u)  # colatitude increasing from the pole
                u, glw = u[order], glw[order]
                self.colat = np.arccos(u)
                colat_w = glw / 2.0
            else:
                self.colat = (np.arange(spec.n_colat) + 0.5) * np.pi / spec.n_colat
                s = np.sin(self.colat)
                colat_w = s / np.sum(s)
            self.lon = 2.0 * np.pi * np.arange(spec.n_lon) / spec.n_lon
            st, ct = np.sin(self.colat), np.cos(self.colat)
            cl, sl = np.cos(self.lon), np.sin(self.lon)
            pts = np.empty((spec.n_colat, spec.n_lon, 3))
            pts[..., 0] = st[:, None] * cl[None, :]
            pts[..., 1] = st[:, None] * sl[None, :]
            pts[..., 2] = ct[:, None]
            w = np.repeat(colat_w / spec.n_lon, spec.n_lon)
            self.shape = (spec.n_colat, spec.n_lon)
            self.points = pts.reshape(-1, 3)
            self.weights = w
            self.colat_weights = colat_w
        else:
            u, glw = np.polynomial.legendre.leggauss(spec.n_colat)
            order = np.argsort(-u)
            u, glw = u[order], glw[order]
            eta = 0.5 * np.arccos(u)
            self.eta = eta
            a = 2.0 * np.pi * np.arange(spec.n_lon) / spec.n_lon
            b = 2.0 * np.pi * np.arange(spec.n_lon) / spec.n_lon
            ce, se = np.cos(eta), np.sin(eta)
            pts = np.empty((spec.n_colat, spec.n_lon, spec.n_lon, 4))
            pts[..., 0] = ce[:, None, None] * np.cos(a)[None, :, None]
            pts[..., 1] = ce[:, None, None] * np.sin(a)[None, :, None]
            pts[..., 2] = se[:, None, None] * np.cos(b)[None, None, :]
            pts[..., 3] = se[:, None, None] * np.sin(b)[None, None, :]
            w = np.repeat(glw / (2.0 * spec.n_lon**2), spec.n_lon**2)
            self.shape = (spec.n_colat, spec.n_lon, spec.n_lon)
            self.points = pts.reshape(-1, 4)
            self.weights = w
        self.n_points = self.points.shape[0]
        self.ambient_dim = self.points.shape[1]
        self.dim = spec.dim

    def reshape(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    def flatten(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(-1)

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature against the normalized invariant measure, fixed order."""
        import math

        return math.fsum(self.weights * np.asarray(values, dtype=float))

    def __repr__(self):
        return f"Grid({self.spec.kind}, {self.shape}, dim={self.dim})"


_GRID_CACHE: dict[GridSpec, Grid] = {}


def build_grid(spec: GridSpec) -> Grid:
    """Construct (and memoize) the grid for a spec."""
    grid = _GRID_CACHE.get(spec)
    if grid is None:
        grid = Grid(spec)
        _GRID_CACHE[spec] = grid
    return grid


def fibonacci_sphere(count: int) -> np.ndarray:
    """Near-uniform equal-weight points on S^2 (golden-angle spiral)."""
    k = np.arange(count)
    z = 1.0 - (2.0 * k + 1.0) / count
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    theta = 2.0 * np.pi * k / golden
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def hopf_lattice(count: int) -> np.ndarray:
    """Near-uniform equal-weight points on S^3 via a Kronecker lattice.

    Stratified in cos(2e); the two Hopf angles advance by the plastic
    constant's reciprocal powers, a standard low-discrepancy pair.
    """
    k = np.arange(count)
    u = -1.0 + (2.0 * k + 1.0) / count
    eta = 0.5 * np.arccos(u)
    plastic = 1.3247179572447460
    g1, g2 = 1.0 / plastic, 1.0 / plastic**2
    a = 2.0 * np.pi * ((k * g1) % 1.0)
    b = 2.0 * np.pi * ((k * g2) % 1.0)
    ce, se = np.cos(eta), np.sin(eta)
    return np.stack([ce * np.cos(a), ce * np.sin(a), se * np.cos(b), se * np.sin(b)], axis=1)


def systematic_sample(masses: np.ndarray, count: int) -> np.ndarray:
    """Deterministic systematic resampling: indices drawn at evenly spaced
    quantiles of the cumulative mass. Output is sorted and may repeat."""
    masses = np.asarray(masses, dtype=float)
    cdf = np.cumsum(masses)
    cdf = cdf / cdf[-1]
    targets = (np.arange(count) + 0.5) / count
    return np.searchsorted(cdf, targets, side="left")


def equal_area_bin_index(points: np.ndarray, n_bands: int = 6, n_sectors: int = 8) -> np.ndarray:
    """Equal-area binning of S^2: uniform bands in z crossed with sectors."""
    z = np.clip(points[:, 2], -1.0, 1.0)
    band = np.minimum(((1.0 - z) * n_bands / 2.0).astype(int), n_bands - 1)
    theta = np.arctan2(points[:, 1], points[:, 0]) % (2.0 * np.pi)
    sector = np.minimum((theta * n_sectors / (2.0 * np.pi)).astype(int), n_sectors - 1)
    return band * n_sectors + sector
