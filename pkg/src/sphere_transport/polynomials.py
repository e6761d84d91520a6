"""Ambient polynomials and their exact derivatives on embedded spheres.

A polynomial in the ambient coordinates of R^m restricted to the unit
sphere S^{m-1} is a bandlimited function: a combination of spherical
harmonics up to its total degree. Working with the polynomial instead of
samples gives exact gradients and Hessians, which the field layer turns
into intrinsic (tangential) derivatives.

Real spherical harmonics on S^2 are constructed here as ambient
polynomials: degree-l combinations of ``Q(z) * Re/Im[(x + iy)^m]`` with
``Q`` the m-th derivative of the Legendre polynomial. They are normalized
to unit mean square against the rotation invariant probability measure,
so the degree-(1,0) mode is sqrt(3) z.
"""

from __future__ import annotations

from itertools import combinations_with_replacement
from math import comb, factorial

import numpy as np

__all__ = [
    "MonomialBasis",
    "AmbientPolynomial",
    "sh_mode_polynomial",
    "sh_pairs",
    "polynomial_from_sh_coeffs",
    "random_bandlimited_polynomial",
    "monomial_sphere_mean",
]

_EVAL_CHUNK = 32768


class MonomialBasis:
    """All monomials of total degree <= ``degree`` in ``ambient_dim`` variables."""

    def __init__(self, ambient_dim: int, degree: int):
        self.ambient_dim = ambient_dim
        self.degree = degree
        expo = [np.zeros(ambient_dim, dtype=int)]
        for d in range(1, degree + 1):
            for combo in combinations_with_replacement(range(ambient_dim), d):
                e = np.zeros(ambient_dim, dtype=int)
                for c in combo:
                    e[c] += 1
                expo.append(e)
        self.exponents = np.array(expo)
        self.size = self.exponents.shape[0]
        self._index = {tuple(e): i for i, e in enumerate(self.exponents)}

    def index(self, exponent) -> int:
        return self._index[tuple(int(v) for v in exponent)]

    def monomial_matrix(self, points: np.ndarray) -> np.ndarray:
        """(N, K) matrix of monomial values at the given points."""
        points = np.asarray(points, dtype=float)
        N, m = points.shape
        powers = np.ones((m, self.degree + 1, N))
        for d in range(m):
            for p in range(1, self.degree + 1):
                powers[d, p] = powers[d, p - 1] * points[:, d]
        vm = np.ones((N, self.size))
        for k, e in enumerate(self.exponents):
            col = None
            for d in range(m):
                if e[d] > 0:
                    col = powers[d, e[d]] if col is None else col * powers[d, e[d]]
            if col is not None:
                vm[:, k] = col
        return vm

    def derivative(self, coeffs: np.ndarray, axis: int) -> np.ndarray:
        """Coefficients of the partial derivative along one ambient axis."""
        out = np.zeros_like(coeffs)
        for k, e in enumerate(self.exponents):
            if coeffs[k] == 0.0 or e[axis] == 0:
                continue
            e2 = e.copy()
            e2[axis] -= 1
            out[self._index[tuple(e2)]] += coeffs[k] * e[axis]
        return out


class AmbientPolynomial:
    """A polynomial with cached derivative coefficient tables.

    ``eval_all`` shares one monomial matrix across the value, the ambient
    gradient and the ambient Hessian, and chunks long point lists to keep
    memory bounded.
    """

    def __init__(self, basis: MonomialBasis, coeffs: np.ndarray):
        self.basis = basis
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (basis.size,):
            raise ValueError("coefficient vector does not match the basis")
        m = basis.ambient_dim
        self._grad_coeffs = [basis.derivative(self.coeffs, d) for d in range(m)]
        self._hess_pairs = [(d1, d2) for d1 in range(m) for d2 in range(d1, m)]
        self._hess_coeffs = [
            basis.derivative(self._grad_coeffs[d1], d2) for d1, d2 in self._hess_pairs
        ]
        self._stack = np.column_stack([self.coeffs, *self._grad_coeffs, *self._hess_coeffs])

    @property
    def ambient_dim(self) -> int:
        return self.basis.ambient_dim

    def __add__(self, other: "AmbientPolynomial") -> "AmbientPolynomial":
        if other.basis is not self.basis:
            raise ValueError("polynomials live on different bases")
        return AmbientPolynomial(self.basis, self.coeffs + other.coeffs)

    def scale(self, factor: float) -> "AmbientPolynomial":
        return AmbientPolynomial(self.basis, factor * self.coeffs)

    def value(self, points: np.ndarray) -> np.ndarray:
        return self._eval(points, self.coeffs[:, None])[:, 0]

    def gradient(self, points: np.ndarray) -> np.ndarray:
        cols = np.column_stack(self._grad_coeffs)
        return self._eval(points, cols)

    def eval_all(self, points: np.ndarray):
        """Value (N,), ambient gradient (N, m), ambient Hessian (N, m, m)."""
        points = np.asarray(points, dtype=float)
        N, m = points.shape
        flat = self._eval(points, self._stack)
        val = flat[:, 0]
        grad = flat[:, 1 : 1 + m]
        hess = np.empty((N, m, m))
        for idx, (d1, d2) in enumerate(self._hess_pairs):
            hess[:, d1, d2] = flat[:, 1 + m + idx]
            hess[:, d2, d1] = flat[:, 1 + m + idx]
        return val, grad, hess

    def _eval(self, points: np.ndarray, coeff_cols: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        N = points.shape[0]
        out = np.empty((N, coeff_cols.shape[1]))
        for start in range(0, N, _EVAL_CHUNK):
            block = points[start : start + _EVAL_CHUNK]
            out[start : start + _EVAL_CHUNK] = self.basis.monomial_matrix(block) @ coeff_cols
        return out


# ---------------------------------------------------------------------------
# spherical harmonics on S^2 as ambient polynomials


def sh_pairs(lmax: int):
    """(l, m) pairs in lexicographic order: (0,0), (1,-1), (1,0), (1,1), ..."""
    return [(l, m) for l in range(lmax + 1) for m in range(-l, l + 1)]


def _legendre_power_coeffs(l: int) -> np.ndarray:
    series = np.zeros(l + 1)
    series[l] = 1.0
    return np.polynomial.legendre.leg2poly(series)


def sh_mode_polynomial(l: int, m: int, basis: MonomialBasis) -> np.ndarray:
    """Coefficients of the real spherical harmonic Y_{l,m} on the basis.

    Unit mean square against the normalized measure; positive m pairs with
    cos(m theta), negative with sin(|m| theta), no Condon-Shortley phase.
    """
    if basis.ambient_dim != 3:
        raise ValueError("spherical harmonics here are S^2 polynomials")
    if l > basis.degree:
        raise ValueError("degree exceeds the basis bandlimit")
    am = abs(m)
    q = _legendre_power_coeffs(l)
    for _ in range(am):
        q = np.polynomial.polynomial.polyder(q)
    norm = np.sqrt((2 * l + 1) * factorial(l - am) / factorial(l + am))
    if m != 0:
        norm *= np.sqrt(2.0)
    coeffs = np.zeros(basis.size)
    # Re/Im[(x + i y)^am] expanded over x^(am-j) y^j
    trig_terms = []
    for j in range(am + 1):
        c = comb(am, j)
        phase = j % 4
        if m >= 0 and phase in (0, 2):  # real part
            trig_terms.append((am - j, j, c * (1.0 if phase == 0 else -1.0)))
        elif m < 0 and phase in (1, 3):  # imaginary part
            trig_terms.append((am - j, j, c * (1.0 if phase == 1 else -1.0)))
    if m == 0:
        trig_terms = [(0, 0, 1.0)]
    for k, qk in enumerate(q):
        if qk == 0.0:
            continue
        for ax, ay, tc in trig_terms:
            coeffs[basis.index((ax, ay, k))] += norm * qk * tc
    return coeffs


def polynomial_from_sh_coeffs(lmax: int, coeffs, basis: MonomialBasis | None = None) -> AmbientPolynomial:
    """Assemble a field from (l, m)-lexicographic spherical harmonic coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    pairs = sh_pairs(lmax)
    if coeffs.shape != (len(pairs),):
        raise ValueError(f"expected {len(pairs)} coefficients for lmax={lmax}")
    if basis is None:
        basis = MonomialBasis(3, lmax)
    total = np.zeros(basis.size)
    for c, (l, m) in zip(coeffs, pairs):
        if c != 0.0:
            total += c * sh_mode_polynomial(l, m, basis)
    return AmbientPolynomial(basis, total)


def monomial_sphere_mean(exponent, ambient_dim: int) -> float:
    """Exact mean of a monomial over S^{m-1} (normalized measure)."""
    a = np.asarray(exponent, dtype=int)
    if np.any(a % 2):
        return 0.0
    half = a // 2
    num = 1.0
    for h in half:
        for i in range(1, h + 1):
            num *= 2 * i - 1
    den = 1.0
    for j in range(1, int(np.sum(half)) + 1):
        den *= ambient_dim + 2 * j - 2
    return num / den


def random_bandlimited_polynomial(
    rng: np.random.Generator,
    ambient_dim: int,
    lmax: int,
    decay: float = 1.0,
) -> AmbientPolynomial:
    """A random zero-mean bandlimited field on S^{m-1}.

    On S^2 the coefficients are drawn per spherical harmonic mode with a
    (1 + l)^(-decay) scale; in other dimensions a random polynomial over
    the monomial basis is drawn and its exact sphere mean subtracted.
    The caller rescales amplitude as needed.
    """
    if ambient_dim == 3:
        pairs = sh_pairs(lmax)
        coeffs = np.array(
            [0.0 if l == 0 else rng.standard_normal() / (1.0 + l) ** decay for l, _ in pairs]
        )
        return polynomial_from_sh_coeffs(lmax, coeffs)
    basis = MonomialBasis(ambient_dim, lmax)
    degrees = np.sum(basis.exponents, axis=1)
    coeffs = rng.standard_normal(basis.size) / (1.0 + degrees) ** decay
    mean = sum(
        c * monomial_sphere_mean(e, ambient_dim)
        for c, e in zip(coeffs, basis.exponents)
        if c != 0.0
    )
    coeffs[0] -= mean
    return AmbientPolynomial(basis, coeffs)
