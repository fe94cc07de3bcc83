"""The u = y + z splitting and the linear parabolic solvers behind it.

z is the stochastic convolution of H(u) against the heat semigroup, advanced
by exponential Euler in the sine basis; y solves the linear divergence-form
problem with coefficients frozen along the stored u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import SpaceTimeField, SpatialGrid, TimeGrid, divergence, gradient, l2_norm
from .noise import NoiseModel, WienerPath, ZeroNoise
from .spde import (CoefficientSet, EllipticityError, SpdeRun, face_average, implicit_diffusion_solve,
                   solve_tridiagonal)
from .spectral import eigenvalues, inverse_sine_transform, sine_transform


# --- z: stochastic convolution -------------------------------------------

def stochastic_convolution(path: WienerPath | None, model: NoiseModel, u: SpaceTimeField,
                           discrete_eigenvalues: bool = False) -> SpaceTimeField:
    grid, times = u.grid, u.times
    n = grid.n_interior
    z = np.zeros(u.values.shape)
    if path is None or isinstance(model, ZeroNoise):
        return SpaceTimeField(grid, times, z)
    if path.times != times:
        raise ValueError("path and field use different time grids")
    if path.k_trunc < model.k_trunc:
        raise ValueError(f"path carries {path.k_trunc} modes but the noise model needs {model.k_trunc}")
    if path.increments.shape[:-2] != u.values.shape[:-2]:
        raise ValueError("path and field disagree on the replica axes")
    decay = np.exp(-eigenvalues(n, discrete_eigenvalues, n) * times.dt)
    c = np.zeros(u.values.shape[:-2] + (n,))
    x = grid.nodes
    for step in range(times.n_steps):
        kick = model.apply(u.values[..., step, :], path.increments[..., step, :], x)
        c = decay * (c + sine_transform(kick).coeffs)
        z[..., step + 1, :] = inverse_sine_transform(c, n)
    return SpaceTimeField(grid, times, z)


# --- linear solvers --------------------------------------------------------

def solve_divergence(v0: np.ndarray, a_faces: np.ndarray, g_faces: np.ndarray | None, f_nodes: np.ndarray | None,
                     grid: SpatialGrid, times: TimeGrid) -> np.ndarray:
    """Implicit Euler for dv = (d/dx(a dv/dx) + d/dx g + f) dt, v = 0 on the boundary.

    ``a_faces`` and ``g_faces`` have shape ``(..., n_steps, n + 1)``; step m
    uses entry m of every data array.  Returns ``(..., n_steps + 1, n)``.
    """
    h, dt = grid.h, times.dt
    batch = a_faces.shape[:-2]
    out = np.empty(batch + (times.n_steps + 1, grid.n_interior))
    out[..., 0, :] = v0
    v = out[..., 0, :]
    for m in range(times.n_steps):
        rhs = v.copy()
        if g_faces is not None:
            rhs = rhs + dt * divergence(g_faces[..., m, :], h)
        if f_nodes is not None:
            rhs = rhs + dt * f_nodes[..., m, :]
        try:
            v = implicit_diffusion_solve(rhs, a_faces[..., m, :], dt, h)
        except np.linalg.LinAlgError as exc:
            raise EllipticityError(f"step {m}: diffusion coefficient is not uniformly elliptic ({exc})") from exc
        out[..., m + 1, :] = v
    return out


@dataclass
class YProblem:
    """Data of the linear problem for y, aligned with the time steps."""

    v0: np.ndarray
    a_faces: np.ndarray
    g_faces: np.ndarray
    f_nodes: np.ndarray
    grid: SpatialGrid
    times: TimeGrid


def y_problem(u: SpaceTimeField, z: SpaceTimeField, coeffs: CoefficientSet) -> YProblem:
    """a = A(u_m), g = B(u_m) + (A(u_m) - 1) dz_{m+1}/dx, f = F(u_m) for step m."""
    uv = u.values[..., :-1, :]
    u_faces = face_average(uv)
    a = coeffs.A(u_faces)
    g = coeffs.B(u_faces) + (a - 1.0) * gradient(z.values[..., 1:, :], u.grid.h)
    f = coeffs.F(uv)
    return YProblem(u.values[..., 0, :], a, g, f, u.grid, u.times)


def solve_y_divergence(u: SpaceTimeField, z: SpaceTimeField, coeffs: CoefficientSet) -> SpaceTimeField:
    if u.values.shape != z.values.shape:
        raise ValueError("u and z are not aligned")
    p = y_problem(u, z, coeffs)
    a = p.a_faces
    if np.any(a < coeffs.nu - 1e-12):
        raise EllipticityError(f"A(u) drops to {a.min():.6g} below nu = {coeffs.nu}")
    return SpaceTimeField(u.grid, u.times, solve_divergence(p.v0, a, p.g_faces, p.f_nodes, p.grid, p.times))


BoundaryData = Callable[[float], float] | float | None


def _boundary_value(phi: BoundaryData, t: float) -> float:
    if phi is None:
        return 0.0
    return float(phi(t)) if callable(phi) else float(phi)


def solve_nondivergence(a_nodes: np.ndarray, f_nodes: np.ndarray | None, v0: np.ndarray, grid: SpatialGrid,
                        times: TimeGrid, phi_left: BoundaryData = None, phi_right: BoundaryData = None,
                        nu: float | None = None) -> np.ndarray:
    """Implicit Euler for dv = (a d2v/dx2 + f) dt with boundary values phi.

    ``a_nodes`` and ``f_nodes`` have shape ``(n_steps, n)`` (step m reads
    entry m, i.e. a(t_m, x_i)).  Returns interior values ``(n_steps + 1, n)``;
    the boundary values are phi at each time level.
    """
    h, dt = grid.h, times.dt
    r = dt / (h * h)
    if nu is not None and np.any(a_nodes < nu - 1e-12):
        raise EllipticityError(f"coefficient drops to {a_nodes.min():.6g} below nu = {nu}")
    if np.any(a_nodes <= 0):
        raise EllipticityError("non-divergence coefficient must be positive")
    t = times.times
    out = np.empty((times.n_steps + 1, grid.n_interior))
    out[0] = v0
    v = np.asarray(v0, dtype=float)
    for m in range(times.n_steps):
        a = a_nodes[m]
        rhs = v.copy()
        if f_nodes is not None:
            rhs += dt * f_nodes[m]
        rhs[0] += r * a[0] * _boundary_value(phi_left, t[m + 1])
        rhs[-1] += r * a[-1] * _boundary_value(phi_right, t[m + 1])
        try:
            v = solve_tridiagonal(-r * a, 1.0 + 2.0 * r * a, -r * a, rhs)
        except np.linalg.LinAlgError as exc:
            raise EllipticityError(f"step {m}: {exc}") from exc
        out[m + 1] = v
    return out


# --- decomposition ---------------------------------------------------------

@dataclass
class DecompositionResult:
    z: SpaceTimeField
    y: SpaceTimeField
    residual_sup: np.ndarray
    residual_series: np.ndarray = field(repr=False)
    settings: dict = field(default_factory=dict)

    def as_dict(self, replica: int | None = None) -> dict:
        rs, series = self.residual_sup, self.residual_series
        if replica is not None and np.ndim(rs) > 0:
            rs, series = rs[replica], series[replica]
        return {"residual_sup": np.asarray(rs).tolist(), "residual_series": np.asarray(series).tolist(),
                "settings": self.settings}


def decompose(run_: SpdeRun, discrete_eigenvalues: bool = False) -> DecompositionResult:
    u = run_.u
    z = stochastic_convolution(run_.path, run_.model, u, discrete_eigenvalues)
    y = solve_y_divergence(u, z, run_.coeffs)
    resid = np.abs(u.values - y.values - z.values)
    series = resid.max(axis=-1)
    settings = {"dt": u.times.dt, "h": u.grid.h, "n_interior": u.grid.n_interior, "T": u.times.horizon,
                "eigenvalues": "discrete" if discrete_eigenvalues else "continuum",
                "seed": run_.metadata.get("seed"), "replicas": run_.metadata.get("replicas")}
    return DecompositionResult(z, y, series.max(axis=-1), series, settings)


def residual_tolerance(dt: float, h: float, scale: float, factor: float = 5.0) -> float:
    return factor * (math.sqrt(dt) + h * h) * scale


# --- estimate checks -------------------------------------------------------

@dataclass
class RatioReport:
    lhs: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self):
        return {"lhs": np.asarray(self.lhs).tolist(), "rhs": np.asarray(self.rhs).tolist(),
                "ratio": np.asarray(self.ratio).tolist(), "passed": self.passed, **self.detail}


def _space_time_lp(v: np.ndarray, h: float, dt: float, p: float) -> np.ndarray:
    """Discrete L^p((0,T) x D) norm over the trailing (step, node) axes."""
    if math.isinf(p):
        return np.max(np.abs(v), axis=(-2, -1))
    return (dt * h * np.sum(np.abs(v) ** p, axis=(-2, -1))) ** (1.0 / p)


def _ratio(lhs, rhs, zero_tol):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > zero_tol, np.inf, 0.0))
    return ratio


def energy_estimate_check(v: np.ndarray, problem: YProblem, c_max: float = 100.0,
                          zero_tol: float = 1e-12) -> RatioReport:
    """sup_t ||v||_2 + ||dv/dx||_{L2(D_T)} against ||v0||_2 + ||g||_{L2(D_T)} + ||f||_{L2(D_T)}."""
    h, dt = problem.grid.h, problem.times.dt
    lhs = np.max(l2_norm(v, h), axis=-1) + _space_time_lp(gradient(v[..., 1:, :], h), h, dt, 2)
    rhs = (l2_norm(problem.v0, h) + _space_time_lp(problem.g_faces, h, dt, 2)
           + _space_time_lp(problem.f_nodes, h, dt, 2))
    ratio = _ratio(lhs, rhs, zero_tol)
    passed = bool(np.all(np.isfinite(ratio)) and np.all(ratio <= c_max))
    return RatioReport(lhs, rhs, ratio, passed, {"c_max": c_max})


def linfty_bound_check(v: np.ndarray, problem: YProblem, r0: float = 2.0, c_max: float = 100.0,
                       zero_tol: float = 1e-12) -> RatioReport:
    """sup|v| against ||v0||_inf + ||g||_{L^{2 r0}(D_T)} + ||f||_{L^{r0}(D_T)}."""
    if r0 < 2:
        raise ValueError("r0 must be >= 2")
    h, dt = problem.grid.h, problem.times.dt
    lhs = np.max(np.abs(v), axis=(-2, -1))
    rhs = (np.max(np.abs(problem.v0), axis=-1) + _space_time_lp(problem.g_faces, h, dt, 2 * r0)
           + _space_time_lp(problem.f_nodes, h, dt, r0))
    ratio = _ratio(lhs, rhs, zero_tol)
    passed = bool(np.all(np.isfinite(ratio)) and np.all(ratio <= c_max))
    return RatioReport(lhs, rhs, ratio, passed, {"c_max": c_max, "r0": r0})


def maximum_principle_violation(values: np.ndarray) -> float:
    """Largest increase of max|u| from one level to the next (<= 0 when the principle holds)."""
    sup = np.max(np.abs(values), axis=-1)
    return float(np.max(np.diff(sup, axis=-1))) if sup.shape[-1] > 1 else 0.0


# --- compatibility conditions ----------------------------------------------

@dataclass
class CompatibilityReport:
    order: int
    h: float
    tol: float
    traces: dict
    verdicts: dict

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def as_dict(self):
        return {"order": self.order, "h": self.h, "tol": self.tol, "traces": self.traces,
                "verdicts": self.verdicts, "passed": self.passed}


def _extrapolate(v1, v2):
    return 2.0 * v1 - v2


def _one_sided_slope(v0, v1, v2, h, side):
    s = (-3.0 * v0 + 4.0 * v1 - v2) / (2.0 * h)
    return s if side == "left" else -s


def first_time_derivative(w: np.ndarray, coeffs: CoefficientSet, h: float) -> np.ndarray:
    """u0^(1) = d/dx(A(u0) du0/dx) + d/dx B(u0) + F(u0) at interior nodes, from nodal values w incl. boundary."""
    wf = 0.5 * (w[:-1] + w[1:])
    flux = coeffs.A(wf) * np.diff(w) / h + coeffs.B(wf)
    return np.diff(flux) / h + coeffs.F(w[1:-1])


def compatibility_check(u0: Callable[[np.ndarray], np.ndarray], coeffs: CoefficientSet, order: int,
                        grid: SpatialGrid, tol_factor: float = 10.0) -> CompatibilityReport:
    """Boundary traces required at x = 0, 1 before a C^{lambda, k + iota} claim of order ``order``.

    u0 is sampled on the nodes including the endpoints; traces of derived
    quantities come from linear extrapolation of the two nodes nearest each
    endpoint, slopes from second-order one-sided differences.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    need = 3 if order < 4 else 6
    if grid.n_interior < need:
        raise ValueError(f"order {order} needs at least {need} interior nodes to form one-sided differences")
    h = grid.h
    xb = grid.nodes_with_boundary
    w = np.asarray(u0(xb), dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("u0 is not finite on the grid; the profile is not smooth enough to check")
    tol = tol_factor * h
    traces: dict = {"u0": [float(w[0]), float(w[-1])]}
    verdicts = {"u0": bool(abs(w[0]) <= tol and abs(w[-1]) <= tol)}
    if order >= 2:
        u1 = first_time_derivative(w, coeffs, h)
        left = _extrapolate(u1[0], u1[1])
        right = _extrapolate(u1[-1], u1[-2])
        traces["u0_1"] = [float(left), float(right)]
        verdicts["u0_1"] = bool(abs(left) <= tol and abs(right) <= tol)
    if order >= 4:
        u1b = np.concatenate([[left], u1, [right]])
        exprs = []
        for side, idx in (("left", (0, 1, 2)), ("right", (-1, -2, -3))):
            du0 = _one_sided_slope(*(w[i] for i in idx), h, side)
            du1 = _one_sided_slope(*(u1b[i] for i in idx), h, side)
            # second differences of u0^(1) at the 2nd and 3rd nodes from the endpoint (the first would
            # involve the extrapolated trace and vanish identically), extrapolated over two cells
            s = u1 if side == "left" else u1[::-1]
            d2a = (s[0] - 2 * s[1] + s[2]) / h**2
            d2b = (s[1] - 2 * s[2] + s[3]) / h**2
            lap = 3.0 * d2a - 2.0 * d2b
            e = 2.0 * coeffs.dA(0.0) * du0 * du1 + coeffs.dB(0.0) * du1 + coeffs.A(0.0) * lap
            exprs.append(float(e))
        traces["second_order"] = exprs
        verdicts["second_order"] = bool(all(abs(e) <= tol for e in exprs))
    return CompatibilityReport(order, h, tol, traces, verdicts)
