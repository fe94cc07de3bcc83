import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from qspde.grid import SpatialGrid, l2_norm
from qspde.spectral import (DirichletEigenSystem, SpectralField, bessel_norm, eigenvalues, grid_eigenfunctions,
                            inverse_sine_transform, regularization_constant_probe, semigroup_apply,
                            sine_transform)


def test_continuum_eigenvalues():
    assert np.allclose(eigenvalues(3), [np.pi**2, 4 * np.pi**2, 9 * np.pi**2])


def test_discrete_eigenvalues_match_fd_matrix():
    n = 12
    h = 1 / (n + 1)
    lap = (np.diag(2 * np.ones(n)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h**2
    oracle = np.sort(np.linalg.eigvalsh(lap))
    assert np.allclose(eigenvalues(n, discrete=True, n_interior=n), oracle, rtol=1e-12)


def test_grid_eigenfunctions_orthonormal():
    g = SpatialGrid(20)
    E = grid_eigenfunctions(g)
    assert np.allclose(g.h * E.T @ E, np.eye(20), atol=1e-13)


def test_eigenfunctions_shape():
    E = DirichletEigenSystem(4).eigenfunctions(np.linspace(0, 1, 9))
    assert E.shape == (9, 4)
    assert np.allclose(E[0], 0) and np.allclose(E[-1], 0, atol=1e-15)


@settings(max_examples=50)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_transform_roundtrip_and_parseval(n, seed):
    v = np.random.default_rng(seed).standard_normal(n)
    c = sine_transform(v)
    assert np.allclose(inverse_sine_transform(c, n), v, atol=1e-12)
    assert bessel_norm(c, 0.0) == pytest.approx(float(l2_norm(v, 1 / (n + 1))), rel=1e-12)


def test_single_mode_transform():
    g = SpatialGrid(15)
    c = sine_transform(np.sqrt(2) * np.sin(3 * np.pi * g.nodes)).coeffs
    expected = np.zeros(15)
    expected[2] = 1
    assert np.allclose(c, expected, atol=1e-14)


def test_truncated_transform_and_errors():
    v = np.ones(8)
    assert sine_transform(v, 3).k_max == 3
    with pytest.raises(ValueError):
        sine_transform(v, 9)
    with pytest.raises(ValueError):
        inverse_sine_transform(np.ones(9), 8)


def test_semigroup():
    c = SpectralField(np.ones(4))
    assert np.allclose(semigroup_apply(c, 0.0).coeffs, 1.0)
    assert np.allclose(semigroup_apply(c, 0.1).coeffs, np.exp(-eigenvalues(4) * 0.1))
    with pytest.raises(ValueError):
        semigroup_apply(c, -1.0)


def test_bessel_norm_of_single_mode():
    c = np.zeros(5)
    c[1] = 2.0
    assert bessel_norm(c, 1.5) == pytest.approx(2.0 * (1 + 4 * np.pi**2) ** 0.75)
    with pytest.raises(ValueError):
        bessel_norm(c, -1)


@pytest.mark.parametrize("delta", [0.5, 1.0, 2.0])
def test_regularization_probe_below_continuous_sup(delta):
    # sup over real lambda >= 0 of (1 + lambda)^(delta/2) exp(-lambda t) bounds the sup over eigenvalues
    for row in regularization_constant_probe(0.0, delta, [1e-3, 1e-2, 1e-1]):
        t = row["t"]
        res = minimize_scalar(lambda lam: -((1 + lam) ** (delta / 2) * math.exp(-lam * t)),
                              bounds=(0, 50 / t), method="bounded")
        assert row["ratio"] <= -res.fun * (1 + 1e-9)
        assert row["scaled"] == pytest.approx(row["ratio"] * t ** (delta / 2))


def test_regularization_probe_scaled_bounded_as_t_shrinks():
    rows = regularization_constant_probe(1.0, 1.0, [1e-5, 1e-4, 1e-3], k_max=20000)
    scaled = [r["scaled"] for r in rows]
    # t^(delta/2) ||S(t)|| stays bounded as t -> 0 (the supremum approaches (delta/2e)^(delta/2))
    assert max(scaled) <= (0.5 / math.e) ** 0.5 * 1.05 + 1e-3
