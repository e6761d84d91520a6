"""Spherical harmonic analysis and synthesis on Gauss-Legendre S^2 grids.

Longitude is handled by FFT and colatitude by Gauss-Legendre contraction
against fully normalized associated Legendre functions, so analysis of a
field bandlimited at the grid's capacity is exact to roundoff. Real
coefficients follow the same (l, m)-lexicographic layout as the
polynomial layer: m < 0 pairs with sin(|m| theta), m > 0 with
cos(m theta), and every mode has unit mean square against the normalized
invariant measure.

The transform also solves the Poisson problem spectrally, which is how
Green's-function convolutions of gridded densities are evaluated without
meeting the kernel singularity.
"""

from __future__ import annotations

import numpy as np

from .grids import GAUSS_LEGENDRE, Grid

__all__ = ["SphericalHarmonicTransform"]


def _legendre_tables(lmax: int, colat: np.ndarray):
    """Normalized P_lm and their colatitude derivatives at the given nodes.

    Returned as lists indexed by m; entry m is an array (lmax - m + 1, nc).
    Normalization: integral of P_lm^2 sin(phi) dphi / 2 equals 1.
    """
    nc = colat.size
    st, ct = np.sin(colat), np.cos(colat)
    p = []
    dp = []
    pmm = np.ones(nc)
    for m in range(lmax + 1):
        rows = np.zeros((lmax - m + 1, nc))
        rows[0] = pmm
        if lmax - m >= 1:
            rows[1] = np.sqrt(2 * m + 3.0) * ct * pmm
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((2.0 * l - 1) * (2.0 * l + 1) / ((l - m) * (l + m)))
            b = np.sqrt(
                (2.0 * l + 1) * (l - 1.0 - m) * (l - 1.0 + m) / ((2.0 * l - 3) * (l - m) * (l + m))
            )
            rows[l - m] = a * ct * rows[l - m - 1] - b * rows[l - m - 2]
        drows = np.zeros_like(rows)
        for l in range(m, lmax + 1):
            term = l * ct * rows[l - m]
            if l > m:
                term = term - np.sqrt((2.0 * l + 1) / (2.0 * l - 1) * (l * l - m * m)) * rows[l - m - 1]
            drows[l - m] = term / st
        p.append(rows)
        dp.append(drows)
        pmm = np.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0)) * st * pmm
    return p, dp


class SphericalHarmonicTransform:
    def __init__(self, grid: Grid, lmax: int | None = None):
        if grid.dim != 2 or grid.spec.kind != GAUSS_LEGENDRE:
            raise ValueError("spectral transforms need a Gauss-Legendre S^2 grid")
        self.grid = grid
        nc, nl = grid.shape
        if lmax is None:
            lmax = min(nc - 1, (nl - 1) // 2)
        if lmax > nc - 1 or 2 * lmax >= nl:
            raise ValueError("bandlimit exceeds what the grid resolves")
        self.lmax = lmax
        self.p_tables, self.dp_tables = _legendre_tables(lmax, grid.colat)
        self.n_modes = (lmax + 1) * (lmax + 1)

    # -- layout helpers ----------------------------------------------------

    def mode_index(self, l: int, m: int) -> int:
        return l * l + (m + l)

    def pairs(self):
        return [(l, m) for l in range(self.lmax + 1) for m in range(-l, l + 1)]

    # -- transforms --------------------------------------------------------

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Real coefficients of a gridded field, (l, m)-lexicographic."""
        nc, nl = self.grid.shape
        v = np.asarray(values, dtype=float).reshape(nc, nl)
        fm = np.fft.rfft(v, axis=1)
        colw = self.grid.colat_weights
        coeffs = np.zeros(self.n_modes)
        for m in range(self.lmax + 1):
            rows = self.p_tables[m]
            if m == 0:
                prof = fm[:, 0].real / nl
                proj = rows @ (colw * prof)
                for l in range(m, self.lmax + 1):
                    coeffs[self.mode_index(l, 0)] = proj[l - m]
            else:
                ca = 2.0 * fm[:, m].real / nl
                cb = -2.0 * fm[:, m].imag / nl
                pa = rows @ (colw * ca)
                pb = rows @ (colw * cb)
                for l in range(m, self.lmax + 1):
                    coeffs[self.mode_index(l, m)] = pa[l - m] / np.sqrt(2.0)
                    coeffs[self.mode_index(l, -m)] = pb[l - m] / np.sqrt(2.0)
        return coeffs

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values of a coefficient vector, shape (n_colat, n_lon)."""
        nc, nl = self.grid.shape
        fm = np.zeros((nc, nl // 2 + 1), dtype=complex)
        for m in range(self.lmax + 1):
            rows = self.p_tables[m]
            if m == 0:
                prof = np.zeros(nc)
                for l in range(self.lmax + 1):
                    prof += coeffs[self.mode_index(l, 0)] * rows[l]
                fm[:, 0] = nl * prof
            else:
                pa = np.zeros(nc)
                pb = np.zeros(nc)
                for l in range(m, self.lmax + 1):
                    pa += coeffs[self.mode_index(l, m)] * rows[l - m]
                    pb += coeffs[self.mode_index(l, -m)] * rows[l - m]
                fm[:, m] = 0.5 * nl * np.sqrt(2.0) * (pa - 1j * pb)
        return np.fft.irfft(fm, n=nl, axis=1)

    def tangent_gradient(self, coeffs: np.ndarray) -> np.ndarray:
        """Gradient vectors at the grid nodes, shape (n_points, 3)."""
        nc, nl = self.grid.shape
        fm_dphi = np.zeros((nc, nl // 2 + 1), dtype=complex)
        fm_dtheta = np.zeros((nc, nl // 2 + 1), dtype=complex)
        for m in range(self.lmax + 1):
            rows = self.p_tables[m]
            drows = self.dp_tables[m]
            if m == 0:
                prof = np.zeros(nc)
                for l in range(self.lmax + 1):
                    prof += coeffs[self.mode_index(l, 0)] * drows[l]
                fm_dphi[:, 0] = nl * prof
            else:
                pa = np.zeros(nc)
                pb = np.zeros(nc)
                da = np.zeros(nc)
                db = np.zeros(nc)
                for l in range(m, self.lmax + 1):
                    pa += coeffs[self.mode_index(l, m)] * rows[l - m]
                    pb += coeffs[self.mode_index(l, -m)] * rows[l - m]
                    da += coeffs[self.mode_index(l, m)] * drows[l - m]
                    db += coeffs[self.mode_index(l, -m)] * drows[l - m]
                fm_dphi[:, m] = 0.5 * nl * np.sqrt(2.0) * (da - 1j * db)
                # d/dtheta swaps cos into -m sin and sin into m cos
                fm_dtheta[:, m] = 0.5 * nl * np.sqrt(2.0) * (m * pb - 1j * (-m * pa))
        dphi = np.fft.irfft(fm_dphi, n=nl, axis=1)
        dtheta = np.fft.irfft(fm_dtheta, n=nl, axis=1)
        colat, lon = self.grid.colat, self.grid.lon
        st, ct = np.sin(colat)[:, None], np.cos(colat)[:, None]
        cl, sl = np.cos(lon)[None, :], np.sin(lon)[None, :]
        e_phi = np.stack([ct * cl, ct * sl, -st * np.ones_like(cl)], axis=-1)
        e_theta = np.stack([-sl * np.ones_like(ct), cl * np.ones_like(ct), np.zeros((nc, nl))], axis=-1)
        vec = dphi[..., None] * e_phi + (dtheta / st)[..., None] * e_theta
        return vec.reshape(-1, 3)

    def poisson_potential_coeffs(self, density_coeffs: np.ndarray) -> np.ndarray:
        """Coefficients of u with Laplacian(u) = f / (4 pi), mean zero.

        ``f`` is a zero-mean density with respect to the normalized
        measure; u is the Green's-function convolution of the signed
        measure f dx.
        """
        out = np.zeros_like(density_coeffs)
        for l in range(1, self.lmax + 1):
            for m in range(-l, l + 1):
                i = self.mode_index(l, m)
                out[i] = -density_coeffs[i] / (4.0 * np.pi * l * (l + 1))
        return out
