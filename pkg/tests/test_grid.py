import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qspde.grid import (SpaceTimeField, SpatialGrid, TimeGrid, divergence, field_from_csv, field_to_csv, gradient,
                        l2_norm, lp_norm, make_field, pad_boundary)


def test_spacing_and_nodes():
    g = SpatialGrid(7)
    assert g.h == 0.125
    assert np.allclose(g.nodes, np.arange(1, 8) / 8)
    assert g.nodes_with_boundary[0] == 0.0 and g.nodes_with_boundary[-1] == 1.0
    assert g.faces.size == 8


def test_bad_grids_rejected():
    with pytest.raises(ValueError):
        SpatialGrid(0)
    with pytest.raises(ValueError):
        TimeGrid(0, 1.0)
    with pytest.raises(ValueError):
        TimeGrid.from_step(0.3, 1.0)


def test_time_grid_from_step():
    tg = TimeGrid.from_step(1e-4, 0.1)
    assert tg.n_steps == 1000
    assert tg.times[-1] == pytest.approx(0.1)


def test_gradient_of_tent_is_exact():
    g = SpatialGrid(9)
    v = np.minimum(g.nodes, 1 - g.nodes)
    slopes = gradient(v, g.h)
    assert np.allclose(slopes[:5], 1.0) and np.allclose(slopes[5:], -1.0)


def test_divergence_of_gradient_is_second_difference():
    g = SpatialGrid(15)
    x = g.nodes
    v = x * (1 - x)
    lap = divergence(gradient(v, g.h), g.h)
    # second differences are exact on quadratics
    assert np.allclose(lap, -2.0)


def test_sine_has_unit_norm_on_grid():
    g = SpatialGrid(31)
    e1 = np.sqrt(2) * np.sin(np.pi * g.nodes)
    # h * sum 2 sin^2 (pi x_i) = 1 exactly on the uniform grid
    assert l2_norm(e1, g.h) == pytest.approx(1.0, abs=1e-14)
    assert lp_norm(e1, g.h, np.inf) == pytest.approx(np.sqrt(2) * np.sin(np.pi * 16 / 32))


@given(st.lists(st.floats(-1e3, 1e3).filter(lambda x: x == 0 or abs(x) > 1e-30), min_size=3, max_size=20),
       st.floats(2, 8))
def test_lp_norm_monotone_in_p(vals, p):
    v = np.array(vals)
    h = 1.0 / (v.size + 1)
    # on a measure of total mass < 1 the L^p norms are not ordered in general; rescale by h to the unit mass
    a = lp_norm(v, h, 2) / (v.size * h) ** 0.5
    b = lp_norm(v, h, p) / (v.size * h) ** (1 / p)
    assert a <= b * (1 + 1e-12) + 1e-300


def test_pad_boundary_adds_zeros():
    v = np.ones((2, 3))
    p = pad_boundary(v)
    assert p.shape == (2, 5) and np.all(p[:, 0] == 0) and np.all(p[:, -1] == 0)


def test_make_field_rejects_nonfinite():
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        make_field(SpatialGrid(3), TimeGrid(2, 1.0), lambda x: np.log(x - x))


def test_field_shape_checked():
    with pytest.raises(ValueError):
        SpaceTimeField(SpatialGrid(3), TimeGrid(2, 1.0), np.zeros((2, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_csv_roundtrip(tmp_path_factory, n, steps, seed):
    rng = np.random.default_rng(seed)
    f = SpaceTimeField(SpatialGrid(n), TimeGrid(steps, 0.5), rng.standard_normal((steps + 1, n)))
    path = tmp_path_factory.mktemp("csv") / "f.csv"
    text = field_to_csv(f, path, comment="provenance line")
    assert text.splitlines()[1] == "t,x,value"
    assert len(text.splitlines()) == 2 + (steps + 1) * n
    g = field_from_csv(path)
    assert g.grid == f.grid
    assert np.array_equal(g.values, f.values)
