"""Dirichlet Laplacian on (0, 1) in its sine eigenbasis.

Eigenpairs are the continuum ones, lambda_k = (k pi)^2 and
e_k(x) = sqrt(2) sin(k pi x), sampled on the grid.  On the uniform interior
grid the sampled e_k are exactly orthonormal for k <= n_interior, so the
transform below is an exact change of basis there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dst

from .grid import SpatialGrid


@dataclass(frozen=True)
class DirichletEigenSystem:
    k_max: int
    discrete: bool = False
    n_interior: int | None = None

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.discrete and self.n_interior is None:
            raise ValueError("discrete eigenvalues need n_interior")

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.k_max + 1)

    @property
    def eigenvalues(self) -> np.ndarray:
        k = self.modes
        if self.discrete:
            h = 1.0 / (self.n_interior + 1)
            return 4.0 / h**2 * np.sin(k * np.pi * h / 2) ** 2
        return (k * np.pi) ** 2

    def eigenfunctions(self, x: np.ndarray) -> np.ndarray:
        """Matrix ``E[i, k-1] = e_k(x_i)``."""
        return np.sqrt(2.0) * np.sin(np.pi * np.outer(x, self.modes))


def eigenvalues(k_max: int, discrete: bool = False, n_interior: int | None = None) -> np.ndarray:
    return DirichletEigenSystem(k_max, discrete, n_interior).eigenvalues


@dataclass
class SpectralField:
    """Sine coefficients c_k, k = 1..k_max, along the last axis."""

    coeffs: np.ndarray

    @property
    def k_max(self) -> int:
        return self.coeffs.shape[-1]


def sine_transform(values: np.ndarray, k_max: int | None = None) -> SpectralField:
    """c_k = h * sum_i v_i e_k(x_i) along the last axis."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    k_max = n if k_max is None else k_max
    if k_max > n:
        raise ValueError(f"k_max={k_max} exceeds n_interior={n}")
    h = 1.0 / (n + 1)
    c = dst(values, type=1, axis=-1) * (h / np.sqrt(2.0))
    return SpectralField(c[..., :k_max])


def inverse_sine_transform(c: SpectralField | np.ndarray, n_interior: int) -> np.ndarray:
    coeffs = c.coeffs if isinstance(c, SpectralField) else np.asarray(c, dtype=float)
    k = coeffs.shape[-1]
    if k > n_interior:
        raise ValueError(f"{k} modes cannot be represented on {n_interior} nodes")
    if k < n_interior:
        pad = [(0, 0)] * (coeffs.ndim - 1) + [(0, n_interior - k)]
        coeffs = np.pad(coeffs, pad)
    return dst(coeffs, type=1, axis=-1) / np.sqrt(2.0)


def semigroup_apply(c: SpectralField, t: float, discrete: bool = False, n_interior: int | None = None) -> SpectralField:
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    lam = eigenvalues(c.k_max, discrete, n_interior)
    return SpectralField(c.coeffs * np.exp(-lam * t))


def bessel_norm(c: SpectralField | np.ndarray, a: float, lam: np.ndarray | None = None) -> np.ndarray:
    """Discrete H^{a,2} norm (sum_k (1 + lambda_k)^a c_k^2)^(1/2) along the last axis."""
    if a < 0:
        raise ValueError("negative-order Bessel norms are not supported")
    coeffs = c.coeffs if isinstance(c, SpectralField) else np.asarray(c, dtype=float)
    if lam is None:
        lam = eigenvalues(coeffs.shape[-1])
    return np.sqrt(np.sum((1.0 + lam) ** a * coeffs**2, axis=-1))


def regularization_constant_probe(a: float, delta: float, t_list, k_max: int = 4096,
                                  probes: np.ndarray | None = None) -> list[dict]:
    """Measured norms of S(t) from H^{a,2} to H^{a+delta,2}.

    S(t) is diagonal in the sine basis, so its operator norm is attained on a
    single mode; the sweep over k = 1..k_max is therefore the exact supremum
    for the truncated operator.  Extra ``probes`` (rows of coefficients) are
    evaluated as well and can only lower-bound it.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    lam = eigenvalues(k_max)
    rows = []
    for t in t_list:
        if t < 0:
            raise ValueError("t must be nonnegative")
        gain = (1.0 + lam) ** (delta / 2) * np.exp(-lam * t)
        ratio = float(gain.max())
        if probes is not None:
            c = np.atleast_2d(probes)
            num = bessel_norm(semigroup_apply(SpectralField(c), t), a + delta, lam[: c.shape[-1]])
            den = bessel_norm(c, a, lam[: c.shape[-1]])
            ratio = max(ratio, float(np.max(num / den)))
        rows.append({"t": float(t), "ratio": ratio, "scaled": ratio * t ** (delta / 2),
                     "argmax_mode": int(np.argmax(gain)) + 1})
    return rows


def grid_eigenfunctions(grid: SpatialGrid, k_max: int | None = None) -> np.ndarray:
    return DirichletEigenSystem(k_max or grid.n_interior).eigenfunctions(grid.nodes)
