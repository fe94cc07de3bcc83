"""Linearly-implicit Euler-Maruyama solver for

    du = d/dx B(u) dt + d/dx (A(u) du/dx) dt + F(u) dt + H(u) dW,   u = 0 on the boundary.

One step freezes A at u_n (face value A of the averaged neighbours), treats
the flux and drift explicitly, and applies the noise explicitly in the Ito
sense.  Every step costs one tridiagonal solve per replica; replicas along
leading axes are solved together as one block-diagonal system.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg.lapack import dgtsv

from .grid import SpaceTimeField, SpatialGrid, TimeGrid, divergence, gradient, l2_norm, lp_norm, pad_boundary
from .noise import NoiseModel, WienerPath, ZeroNoise

log = logging.getLogger(__name__)

Func = Callable[[np.ndarray], np.ndarray]


class EllipticityError(ArithmeticError):
    pass


class BlowUpError(ArithmeticError):
    pass


@dataclass
class CoefficientSet:
    A: Func
    dA: Func
    B: Func
    dB: Func
    F: Func
    dF: Func
    nu: float
    mu: float
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 < self.nu <= self.mu):
            raise ValueError(f"ellipticity window needs 0 < nu <= mu, got nu={self.nu}, mu={self.mu}")

    def describe(self) -> dict:
        return {**self.names, "nu": self.nu, "mu": self.mu}


def ellipticity_window(A: Func, probes: np.ndarray | None = None) -> tuple[float, float]:
    """Measured (min A, max A) over the probe values."""
    probes = np.linspace(-20.0, 20.0, 400_001) if probes is None else np.asarray(probes, dtype=float)
    vals = np.asarray(A(probes), dtype=float)
    return float(vals.min()), float(vals.max())


def validate_coefficients(coeffs: CoefficientSet, probes: np.ndarray | None = None, growth_tol: float = 1e6) -> dict:
    """Probe ellipticity and linear growth of B, F on a range of states."""
    probes = np.linspace(-50.0, 50.0, 20_001) if probes is None else np.asarray(probes, dtype=float)
    lo, hi = ellipticity_window(coeffs.A, probes)
    growth = float(np.max((np.abs(coeffs.B(probes)) + np.abs(coeffs.F(probes))) / (1.0 + np.abs(probes))))
    return {
        "nu_measured": lo,
        "mu_measured": hi,
        "elliptic": bool(lo >= coeffs.nu - 1e-12 and hi <= coeffs.mu + 1e-12),
        "growth_constant": growth,
        "linear_growth": bool(math.isfinite(growth) and growth < growth_tol),
    }


# --- built-in coefficient functions --------------------------------------

def _const(c):
    return lambda xi: np.full(np.shape(xi), float(c))


def _table(points: list[tuple[float, float]]):
    pts = sorted(points)
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if xs.size < 2:
        raise ValueError("a coefficient table needs at least two points")
    slopes = np.diff(ys) / np.diff(xs)

    def f(xi):
        return np.interp(xi, xs, ys)

    def df(xi):
        idx = np.clip(np.searchsorted(xs, xi, side="right") - 1, 0, slopes.size - 1)
        inside = (np.asarray(xi) >= xs[0]) & (np.asarray(xi) <= xs[-1])
        return np.where(inside, slopes[idx], 0.0)

    return f, df, float(ys.min()), float(ys.max())


def parse_table(text: str) -> list[tuple[float, float]]:
    """``table(x0:y0, x1:y1, ...)`` -> list of points."""
    body = text.strip()
    if not (body.startswith("table(") and body.endswith(")")):
        raise ValueError(f"not a table: {text!r}")
    points = []
    for item in body[len("table("):-1].split(","):
        if not item.strip():
            continue
        x, y = item.split(":")
        points.append((float(x), float(y)))
    return points


def diffusion_builtin(name: str) -> tuple[Func, Func, float, float]:
    if name in ("heat", "one"):
        return _const(1.0), _const(0.0), 1.0, 1.0
    if name == "twoplus_sin":
        return (lambda xi: 2.0 + np.sin(xi)), np.cos, 1.0, 3.0
    if name.startswith("table("):
        return _table(parse_table(name))
    raise ValueError(f"unknown diffusion coefficient {name!r}")


def flux_builtin(name: str, clip: float = 5.0) -> tuple[Func, Func]:
    if name in ("heat", "zero"):
        return _const(0.0), _const(0.0)
    if name == "burgers_flux":
        R = float(clip)

        def B(xi):
            a = np.abs(xi)
            return np.where(a <= R, 0.5 * xi * xi, R * a - 0.5 * R * R)

        def dB(xi):
            return np.clip(xi, -R, R)

        return B, dB
    if name.startswith("table("):
        f, df, _, _ = _table(parse_table(name))
        return f, df
    raise ValueError(f"unknown flux {name!r}")


def drift_builtin(name: str, rate: float = 1.0) -> tuple[Func, Func]:
    if name in ("heat", "zero"):
        return _const(0.0), _const(0.0)
    if name == "linear_drift":
        return (lambda xi: -rate * np.asarray(xi, dtype=float)), _const(-rate)
    if name.startswith("table("):
        f, df, _, _ = _table(parse_table(name))
        return f, df
    raise ValueError(f"unknown drift {name!r}")


def make_coefficients(A: str = "heat", B: str = "heat", F: str = "heat", *, nu: float | None = None,
                      mu: float | None = None, burgers_clip: float = 5.0, drift_rate: float = 1.0) -> CoefficientSet:
    a, da, nu0, mu0 = diffusion_builtin(A)
    b, db = flux_builtin(B, burgers_clip)
    f, df = drift_builtin(F, drift_rate)
    nu = nu0 if nu is None else nu
    mu = mu0 if mu is None else mu
    return CoefficientSet(a, da, b, db, f, df, nu, mu, {"A": A, "B": B, "F": F})


# --- tridiagonal kernel --------------------------------------------------

def solve_tridiagonal(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve independent tridiagonal systems along the last axis.

    ``lower[..., i]`` couples row i to i-1 and ``upper[..., i]`` couples row i
    to i+1; the first lower and last upper entries are ignored.  All systems
    are stacked into one block-diagonal LAPACK gtsv call.
    """
    shape = rhs.shape
    dl = np.array(np.broadcast_to(lower, shape), dtype=float)
    du = np.array(np.broadcast_to(upper, shape), dtype=float)
    d = np.array(np.broadcast_to(diag, shape), dtype=float).ravel()
    dl[..., 0] = 0.0
    du[..., -1] = 0.0
    dl = dl.ravel()[1:]
    du = du.ravel()[:-1]
    b = np.array(rhs, dtype=float).ravel()
    if b.size == 1:
        return b.reshape(shape) / d.reshape(shape)
    _, _, _, x, info = dgtsv(dl, d, du, b, overwrite_b=True)
    if info != 0:
        raise np.linalg.LinAlgError(f"tridiagonal solve failed (gtsv info={info})")
    return x.reshape(shape)


def implicit_diffusion_solve(rhs: np.ndarray, a_faces: np.ndarray, dt: float, h: float) -> np.ndarray:
    """Solve (I - dt D(a D)) v = rhs with the conservative three-point stencil."""
    r = dt / (h * h)
    left = a_faces[..., :-1]
    right = a_faces[..., 1:]
    return solve_tridiagonal(-r * left, 1.0 + r * (left + right), -r * right, rhs)


def face_average(v: np.ndarray) -> np.ndarray:
    w = pad_boundary(v)
    return 0.5 * (w[..., :-1] + w[..., 1:])


# --- the SPDE ------------------------------------------------------------

@dataclass
class SpdeProblem:
    grid: SpatialGrid
    times: TimeGrid
    coeffs: CoefficientSet
    model: NoiseModel
    u0: Callable[[np.ndarray], np.ndarray]
    blowup_ceiling: float = 1e6

    def initial_values(self) -> np.ndarray:
        x = self.grid.nodes
        v = np.broadcast_to(np.asarray(self.u0(x), dtype=float), x.shape).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("initial datum has non-finite values")
        ends = np.asarray(self.u0(np.array([0.0, 1.0])), dtype=float)
        if np.any(np.abs(ends) > 1e-12):
            raise ValueError(f"initial datum must vanish on the boundary, got u0(0), u0(1) = {ends.tolist()}")
        return v


@dataclass
class SpdeRun:
    u: SpaceTimeField
    path: WienerPath | None
    coeffs: CoefficientSet
    model: NoiseModel
    metadata: dict
    l2: np.ndarray = field(repr=False)
    grad_l2: np.ndarray = field(repr=False)
    sup: np.ndarray = field(repr=False)

    @property
    def problem_grid(self):
        return self.u.grid, self.u.times


def drift_terms(u: np.ndarray, coeffs: CoefficientSet, h: float) -> np.ndarray:
    """d/dx B(u) + F(u) at the nodes, flux evaluated at face-averaged states."""
    return divergence(coeffs.B(face_average(u)), h) + coeffs.F(u)


def step(u_n: np.ndarray, coeffs: CoefficientSet, model: NoiseModel, dw: np.ndarray | None,
         grid: SpatialGrid, dt: float) -> np.ndarray:
    """Advance one time level (``u_n`` may carry leading replica axes)."""
    h = grid.h
    a = coeffs.A(face_average(u_n))
    if np.any(a < coeffs.nu - 1e-12) or np.any(a > coeffs.mu + 1e-12):
        raise EllipticityError(
            f"A(u) left the ellipticity window [{coeffs.nu}, {coeffs.mu}]: range [{a.min():.6g}, {a.max():.6g}]")
    rhs = u_n + dt * drift_terms(u_n, coeffs, h)
    if dw is not None and not isinstance(model, ZeroNoise):
        rhs = rhs + model.apply(u_n, dw, grid.nodes)
    try:
        return implicit_diffusion_solve(rhs, a, dt, h)
    except np.linalg.LinAlgError as exc:
        raise EllipticityError(f"implicit diffusion matrix is singular; check nu > 0 ({exc})") from exc


def _bad_replicas(mask: np.ndarray, replicas) -> list:
    if mask.ndim == 0:
        return list(replicas)[:1]
    idx = np.flatnonzero(mask.reshape(mask.shape[0], -1).any(axis=1)) if mask.ndim > 1 else np.flatnonzero(mask)
    return [replicas[i] for i in idx] if replicas is not None else idx.tolist()


def run(problem: SpdeProblem, path: WienerPath | None = None) -> SpdeRun:
    """Integrate the SPDE over the whole time grid.

    With ``path=None`` the noise is switched off.  A path with a leading
    replica axis produces a field with the same leading axis.
    """
    grid, times = problem.grid, problem.times
    dt, h = times.dt, grid.h
    u0 = problem.initial_values()
    batch: tuple[int, ...] = ()
    replicas = (0,)
    if path is not None:
        if path.times != times:
            raise ValueError("path and problem use different time grids")
        if path.k_trunc < problem.model.k_trunc:
            raise ValueError(f"path has {path.k_trunc} modes, noise model needs {problem.model.k_trunc}")
        batch = path.increments.shape[:-2]
        replicas = path.replicas
    values = np.empty(batch + (times.n_steps + 1, grid.n_interior))
    values[..., 0, :] = u0
    u = values[..., 0, :]
    for n in range(times.n_steps):
        dw = None if path is None else path.increments[..., n, :]
        try:
            u = step(u, problem.coeffs, problem.model, dw, grid, dt)
        except (EllipticityError, FloatingPointError) as exc:
            raise type(exc)(f"step {n} (t={n * dt:.6g}), replicas {list(replicas)}: {exc}") from exc
        bad = ~np.isfinite(u)
        if bad.any():
            raise BlowUpError(f"non-finite state at step {n + 1}, replicas {_bad_replicas(bad, replicas)}")
        big = np.abs(u) > problem.blowup_ceiling
        if big.any():
            raise BlowUpError(f"sup-norm exceeded {problem.blowup_ceiling:g} at step {n + 1}, "
                              f"replicas {_bad_replicas(big, replicas)}")
        values[..., n + 1, :] = u
    field_ = SpaceTimeField(grid, times, values)
    meta = {
        "scheme": "linearly-implicit-euler-maruyama",
        "dt": dt,
        "h": h,
        "n_steps": times.n_steps,
        "n_interior": grid.n_interior,
        "T": times.horizon,
        "seed": None if path is None else path.seed,
        "replicas": list(replicas),
    }
    return SpdeRun(field_, path, problem.coeffs, problem.model if path is not None else ZeroNoise(),
                   meta, l2_norm(values, h), l2_norm(gradient(values, h), h), np.max(np.abs(values), axis=-1))


def a_priori_monitor(run_: SpdeRun, p: float = 2.0, ceiling: float | None = None) -> dict:
    """Per-level l^p norms and cumulative gradient energy ||grad u||_{L2(0,t; L2)}."""
    if p < 2:
        raise ValueError("p must be >= 2")
    h, dt = run_.u.grid.h, run_.u.times.dt
    v = run_.u.values
    lp = lp_norm(v, h, p)
    grad_sq = run_.grad_l2**2
    energy = np.sqrt(np.concatenate([np.zeros(grad_sq.shape[:-1] + (1,)),
                                     np.cumsum(grad_sq[..., 1:] * dt, axis=-1)], axis=-1))
    out = {"lp": lp, "grad_energy": energy, "sup": run_.sup, "p": p}
    if ceiling is not None:
        out["flagged"] = bool(np.any(lp > ceiling) or np.any(energy > ceiling))
    return out
