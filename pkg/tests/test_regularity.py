import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qspde.grid import SpaceTimeField, SpatialGrid, TimeGrid
from qspde.noise import sample_paths
from qspde.regularity import (SpectrumAccumulator, bessel_regularity_profile, dyadic_lags, estimate_space_exponent,
                              estimate_time_exponent, field_holder_norm, parabolic_distance, parabolic_holder_norm,
                              profile_from_spectrum, time_accumulator)
from qspde.spectral import inverse_sine_transform


def _times(n=4096, T=1.0):
    return np.linspace(0, T, n + 1), T / n


def test_sqrt_t_gives_one_half():
    t, dt = _times()
    est = estimate_time_exponent(np.sqrt(t)[:, None], dt)
    assert est.exponent == pytest.approx(0.5, abs=0.05)


def test_linear_t_gives_one():
    t, dt = _times()
    est = estimate_time_exponent(t[:, None], dt)
    assert est.exponent == pytest.approx(1.0, abs=0.05)


def test_brownian_paths():
    tg = TimeGrid(4096, 1.0)
    w = sample_paths(5, tg, 1, range(100)).values()  # (100, 4097, 1)
    est = estimate_time_exponent(w, tg.dt)
    assert 0.42 <= est.exponent <= 0.55


def test_constant_field_is_degenerate():
    t, dt = _times(256)
    est = estimate_time_exponent(np.ones((t.size, 3)), dt)
    assert est.degenerate and math.isnan(est.exponent)


def test_too_few_lags_rejected():
    with pytest.raises(ValueError, match="lags"):
        estimate_time_exponent(np.zeros((40, 2)), 0.025)


def test_space_exponent_of_cusp():
    g = SpatialGrid(1023)
    x = g.nodes
    f = np.abs(x - 0.5) ** 0.5 - 0.5**0.5 + 0 * x
    f = f * np.sin(np.pi * x)  # vanish at the ends, keep the cusp
    est = estimate_space_exponent(np.tile(f, (3, 1)), g.h)
    assert est.exponent == pytest.approx(0.5, abs=0.05)


def test_space_exponent_of_smooth_profile():
    g = SpatialGrid(511)
    f = np.sin(np.pi * g.nodes)
    assert estimate_space_exponent(np.tile(f, (2, 1)), g.h).exponent == pytest.approx(1.0, abs=0.05)


def test_table_csv_header():
    t, dt = _times(1024)
    text = estimate_time_exponent(np.sqrt(t)[:, None], dt).table_csv()
    assert text.splitlines()[0] == "scale,mean_abs_increment,fit_window"


def test_accumulator_chunks_equal_single_pass():
    tg = TimeGrid(512, 1.0)
    w = sample_paths(1, tg, 2, range(10)).values()
    whole = time_accumulator(w.shape[1], tg.dt)
    whole.add(w)
    a, b = time_accumulator(w.shape[1], tg.dt), time_accumulator(w.shape[1], tg.dt)
    a.add(w[:4])
    b.add(w[4:])
    assert a.merge(b).estimate().exponent == pytest.approx(whole.estimate().exponent, abs=1e-12)


def test_dyadic_lags():
    assert dyadic_lags(0.01, 1000, 4, 1.0) == [4, 8, 16, 32, 64]


# --- Hoelder norms --------------------------------------------------------

def test_parabolic_distance():
    assert parabolic_distance(0.0, 0.0, 0.04, 0.1) == pytest.approx(0.2)


def _brute_holder(values, t, x, beta):
    best = 0.0
    pts = [(a, b) for a in range(t.size) for b in range(x.size)]
    for i, (a, b) in enumerate(pts):
        for c, d in pts[i + 1:]:
            dist = max(math.sqrt(abs(t[a] - t[c])), abs(x[b] - x[d]))
            best = max(best, abs(values[a, b] - values[c, d]) / dist**beta)
    return np.max(np.abs(values)) + best


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(2, 5), st.floats(0.1, 0.9), st.integers(0, 2**32 - 1))
def test_exhaustive_holder_matches_brute_force(nt, nx, beta, seed):
    v = np.random.default_rng(seed).standard_normal((nt, nx))
    t = np.linspace(0, 0.1, nt)
    x = np.linspace(0, 1, nx)
    assert parabolic_holder_norm(v, t, x, beta) == pytest.approx(_brute_holder(v, t, x, beta), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_sampled_holder_within_five_percent_on_small_grid(seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 0.04, 5)
    x = np.linspace(0, 1, 5)
    v = rng.standard_normal((5, 5))
    exact = parabolic_holder_norm(v, t, x, 0.5)
    sampled = parabolic_holder_norm(v, t, x, 0.5, max_exhaustive_pairs=0, return_parts=True)
    assert sampled["method"] == "sampled"
    assert sampled["norm"] == pytest.approx(exact, rel=0.05)


def test_holder_norm_validation_and_field_wrapper():
    with pytest.raises(ValueError):
        parabolic_holder_norm(np.zeros((2, 2)), np.arange(2.0), np.arange(2.0), 1.0)
    f = SpaceTimeField(SpatialGrid(3), TimeGrid(2, 0.01), np.ones((3, 3)))
    # boundary zeros are included: jump of 1 over one cell of width 1/4
    assert field_holder_norm(f, 0.5) == pytest.approx(1 + 1 / 0.25**0.5)


# --- Bessel profiles -------------------------------------------------------

def _power_spectrum_field(n, p, levels=3):
    k = np.arange(1, n + 1)
    return np.tile(inverse_sine_transform(k**-p, n), (levels, 1))


def test_bessel_cutoff_of_power_law():
    # c_k = k^-1.5: sum (1 + lambda_k)^a c_k^2 converges iff a < 1
    v = _power_spectrum_field(255, 1.5)
    bp = bessel_regularity_profile(v, [0.5, 0.9, 1.1, 1.5], skip_initial=False)
    assert bp.stable == [True, True, False, False]
    assert bp.cutoff == 0.9
    assert 0.9 < bp.cutoff_interpolated < 1.1


@given(st.floats(1.2, 3.0))
@settings(max_examples=20)
def test_block_ratio_matches_power_law(p):
    n = 256
    power = np.tile(np.arange(1, n + 1, dtype=float) ** (-2 * p), (2, 1))
    bp = profile_from_spectrum(power, [0.0], skip_initial=False)
    # for a k^-2p energy spectrum at a = 0 the later block holds about 2^(1 - 2p) times the earlier one
    assert bp.block_ratio[0] == pytest.approx(2 ** (1 - 2 * p), rel=0.15)


def test_cutoff_monotone_in_decay():
    cut = [bessel_regularity_profile(_power_spectrum_field(255, p), np.arange(0, 4.01, 0.25),
                                     skip_initial=False).cutoff for p in (1.5, 2.0, 2.5)]
    assert cut[0] < cut[1] < cut[2]


def test_zero_field_is_stable_everywhere():
    bp = bessel_regularity_profile(np.zeros((3, 31)), [0, 1, 2])
    assert all(bp.stable) and bp.cutoff == 2 and bp.cutoff_interpolated == math.inf


def test_spectrum_accumulator_merge():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((6, 4, 15))
    a, b, whole = SpectrumAccumulator(), SpectrumAccumulator(), SpectrumAccumulator()
    whole.add(v)
    a.add(v[:2])
    b.add(v[2:])
    assert np.allclose(a.merge(b).mean(), whole.mean())
