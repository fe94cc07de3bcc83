"""Uniform space-time grids on (0, T) x (0, 1) and Dirichlet fields living on them.

Arrays of node values always carry the interior nodes only; the boundary
values are the implicit zeros of the Dirichlet condition.  Leading axes
beyond ``(time, node)`` index independent replicas.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    n_interior: int

    def __post_init__(self):
        if int(self.n_interior) != self.n_interior or self.n_interior < 1:
            raise ValueError(f"n_interior must be a positive integer, got {self.n_interior!r}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n_interior + 1) * self.h

    @property
    def nodes_with_boundary(self) -> np.ndarray:
        return np.arange(0, self.n_interior + 2) * self.h

    @property
    def faces(self) -> np.ndarray:
        """Midpoints between consecutive nodes, boundary nodes included."""
        return (np.arange(self.n_interior + 1) + 0.5) * self.h


@dataclass(frozen=True)
class TimeGrid:
    n_steps: int
    horizon: float

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon!r}")

    @classmethod
    def from_step(cls, dt: float, horizon: float) -> "TimeGrid":
        n = round(horizon / dt)
        if n < 1 or abs(n * dt - horizon) > 1e-9 * horizon:
            raise ValueError(f"dt={dt} does not divide T={horizon}")
        return cls(int(n), float(horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


@dataclass
class SpaceTimeField:
    """Values of a scalar function on the interior nodes at every time level.

    ``values`` has shape ``(..., n_steps + 1, n_interior)``.
    """

    grid: SpatialGrid
    times: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.times.n_steps + 1, self.grid.n_interior)
        if self.values.shape[-2:] != expected:
            raise ValueError(f"field shape {self.values.shape} does not end with {expected}")

    @property
    def shape(self):
        return self.values.shape

    def level(self, n: int) -> np.ndarray:
        return self.values[..., n, :]

    def with_boundary(self) -> np.ndarray:
        """Values padded with the Dirichlet zeros at x = 0 and x = 1."""
        return pad_boundary(self.values)


def make_field(grid: SpatialGrid, times: TimeGrid, init: Callable[[np.ndarray], np.ndarray]) -> SpaceTimeField:
    x = grid.nodes
    level0 = np.asarray(init(x), dtype=float)
    if level0.shape == ():
        level0 = np.full_like(x, float(level0))
    if level0.shape != x.shape:
        level0 = np.array([float(init(xi)) for xi in x])
    if not np.all(np.isfinite(level0)):
        raise ValueError("initial datum has non-finite values")
    values = np.zeros((times.n_steps + 1, grid.n_interior))
    values[0] = level0
    return SpaceTimeField(grid, times, values)


def pad_boundary(v: np.ndarray) -> np.ndarray:
    pad = [(0, 0)] * (v.ndim - 1) + [(1, 1)]
    return np.pad(v, pad)


def gradient(v: np.ndarray, h: float) -> np.ndarray:
    """Face slopes (v[i+1] - v[i]) / h along the last axis, with zero boundary values."""
    return np.diff(pad_boundary(v), axis=-1) / h


def divergence(g: np.ndarray, h: float) -> np.ndarray:
    """Node values (g[i+1/2] - g[i-1/2]) / h from face values along the last axis."""
    return np.diff(g, axis=-1) / h


def discrete_gradient(field: SpaceTimeField, level: int) -> np.ndarray:
    if not -field.times.n_steps - 1 <= level <= field.times.n_steps:
        raise IndexError(f"time level {level} out of range")
    return gradient(field.level(level), field.grid.h)


def l2_norm(v: np.ndarray, h: float) -> np.ndarray:
    """Discrete L2(0,1) norm along the last axis (nodes or faces)."""
    return np.sqrt(h * np.sum(v * v, axis=-1))


def lp_norm(v: np.ndarray, h: float, p: float) -> np.ndarray:
    if math.isinf(p):
        return np.max(np.abs(v), axis=-1)
    return (h * np.sum(np.abs(v) ** p, axis=-1)) ** (1.0 / p)


# --- CSV dump -----------------------------------------------------------

def field_to_csv(field: SpaceTimeField, path: str | Path | None = None, comment: str | None = None) -> str:
    """Write a single-replica field as ``t,x,value`` rows, time-major.

    An optional ``comment`` goes first as a ``#`` line.  Returns the CSV
    text; also writes it to ``path`` when given.
    """
    if field.values.ndim != 2:
        raise ValueError("CSV dump expects a single replica")
    t = field.times.times
    x = field.grid.nodes
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    buf.write("t,x,value\n")
    tt = np.repeat(t, x.size)
    xx = np.tile(x, t.size)
    vv = field.values.ravel()
    lines = [f"{a:.17g},{b:.17g},{c:.17g}" for a, b, c in zip(tt.tolist(), xx.tolist(), vv.tolist())]
    buf.write("\n".join(lines))
    buf.write("\n")
    text = buf.getvalue()
    if path is not None:
        from .harness.io import atomic_write_text
        atomic_write_text(path, text)
    return text


def field_from_csv(path: str | Path) -> SpaceTimeField:
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty field file")
        if [h.strip() for h in header] != ["t", "x", "value"]:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = np.array([[float(c) for c in row] for row in reader if row])
    t = np.unique(rows[:, 0])
    x = np.unique(rows[:, 1])
    grid = SpatialGrid(x.size)
    times = TimeGrid(t.size - 1, float(t[-1]))
    if not np.allclose(x, grid.nodes, rtol=0, atol=1e-12):
        raise ValueError(f"{path}: nodes are not a uniform interior grid of (0,1)")
    return SpaceTimeField(grid, times, rows[:, 2].reshape(t.size, x.size))
