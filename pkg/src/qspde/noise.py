"""Truncated cylindrical Wiener noise and the diffusion operator H(u).

Paths are built by Levy midpoint refinement: the increments over the
``odd(n_steps)`` root intervals are drawn first, then each dyadic bisection
draws its own Brownian-bridge corrections.  Every (replica, level) pair owns
an independent ``SeedSequence`` stream and mode k reads a fixed slice of it,
so two grids sharing T and the odd part of n_steps see the same Brownian
motion, and truncating at fewer modes keeps the leading modes unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import SpatialGrid, TimeGrid, gradient, lp_norm
from .spectral import bessel_norm, sine_transform


# --- Wiener paths -------------------------------------------------------

def _split_dyadic(n_steps: int) -> tuple[int, int]:
    levels = 0
    while n_steps % 2 == 0:
        n_steps //= 2
        levels += 1
    return n_steps, levels


def _levy_increments(seed: int, replica: int, times: TimeGrid, k_trunc: int) -> np.ndarray:
    n_root, levels = _split_dyadic(times.n_steps)
    T = times.horizon

    def stream(level):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(replica, level))
        return np.random.Generator(np.random.PCG64(ss))

    tau = T / n_root
    dw = stream(0).standard_normal((k_trunc, n_root)) * math.sqrt(tau)
    for level in range(1, levels + 1):
        xi = stream(level).standard_normal((k_trunc, dw.shape[1]))
        left = 0.5 * dw + 0.5 * math.sqrt(tau) * xi
        refined = np.empty((k_trunc, 2 * dw.shape[1]))
        refined[:, 0::2] = left
        refined[:, 1::2] = dw - left
        dw = refined
        tau /= 2
    return dw.T


@dataclass
class WienerPath:
    """Brownian increments dW[..., n, k-1] over step n for mode k."""

    seed: int
    replicas: tuple[int, ...]
    times: TimeGrid
    k_trunc: int
    increments: np.ndarray = field(repr=False)

    @property
    def n_replicas(self) -> int:
        return len(self.replicas)

    def values(self) -> np.ndarray:
        """W(t_n) per mode, time level 0 included."""
        w = np.cumsum(self.increments, axis=-2)
        pad = [(0, 0)] * (w.ndim - 2) + [(1, 0), (0, 0)]
        return np.pad(w, pad)

    def replica(self, i: int) -> "WienerPath":
        if self.increments.ndim == 2:
            return self
        return WienerPath(self.seed, (self.replicas[i],), self.times, self.k_trunc, self.increments[i])


def sample_path(seed: int, times: TimeGrid, k_trunc: int, replica: int = 0) -> WienerPath:
    if k_trunc < 1:
        raise ValueError("k_trunc must be >= 1")
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    dw = _levy_increments(int(seed), int(replica), times, int(k_trunc))
    return WienerPath(int(seed), (int(replica),), times, int(k_trunc), dw)


def sample_paths(seed: int, times: TimeGrid, k_trunc: int, replicas: Sequence[int]) -> WienerPath:
    """Stack independent replicas along a leading axis."""
    if k_trunc < 1:
        raise ValueError("k_trunc must be >= 1")
    replicas = tuple(int(r) for r in replicas)
    dw = np.stack([_levy_increments(int(seed), r, times, int(k_trunc)) for r in replicas])
    return WienerPath(int(seed), replicas, times, int(k_trunc), dw)


def coarsen(path: WienerPath, factor: int) -> WienerPath:
    """Sum consecutive increments; equals sampling on the coarser grid."""
    n = path.times.n_steps
    if n % factor:
        raise ValueError("coarsening factor must divide n_steps")
    shape = path.increments.shape[:-2] + (n // factor, factor, path.k_trunc)
    dw = path.increments.reshape(shape).sum(axis=-2)
    return WienerPath(path.seed, path.replicas, TimeGrid(n // factor, path.times.horizon), path.k_trunc, dw)


# --- noise models -------------------------------------------------------

class NoiseModel:
    """Diffusion operator H(u): K -> L2(D) acting on the first ``k_trunc`` modes."""

    variant = "none"
    k_trunc = 0

    def operator(self, u: np.ndarray, k: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def operator_matrix(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        """All modes at once: array ``(..., n_nodes, k_trunc)`` of H(u)e_k."""
        return np.stack([self.operator(u, k, x) for k in range(1, self.k_trunc + 1)], axis=-1)

    def apply(self, u: np.ndarray, dw: np.ndarray, x: np.ndarray) -> np.ndarray:
        """sum_k H(u)e_k dW_k at the nodes ``x``."""
        return np.einsum("...ik,...k->...i", self.operator_matrix(u, x), dw[..., : self.k_trunc])

    def with_truncation(self, k_trunc: int) -> "NoiseModel":
        raise NotImplementedError

    def describe(self) -> dict:
        return {"variant": self.variant, "k_trunc": self.k_trunc}


class ZeroNoise(NoiseModel):
    variant = "none"

    def __init__(self, k_trunc: int = 1):
        self.k_trunc = k_trunc

    def operator(self, u, k, x):
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(x)))

    def apply(self, u, dw, x):
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(x)))

    def with_truncation(self, k_trunc):
        return ZeroNoise(k_trunc)


class FiniteDimNoise(NoiseModel):
    """d-dimensional noise with H(u)e_k = H_k(x, u(x))."""

    variant = "finite_dim"

    def __init__(self, funcs: Sequence[Callable[[np.ndarray, np.ndarray], np.ndarray]], name: str = "custom"):
        if not funcs:
            raise ValueError("need at least one H_k")
        self.funcs = list(funcs)
        self.k_trunc = len(self.funcs)
        self.name = name

    def operator(self, u, k, x):
        if not 1 <= k <= self.k_trunc:
            raise IndexError(f"mode {k} outside 1..{self.k_trunc}")
        out = np.asarray(self.funcs[k - 1](x, u), dtype=float)
        out = np.broadcast_to(out, np.broadcast_shapes(np.shape(u), np.shape(x)))
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"H_{k} produced non-finite values")
        return out

    def with_truncation(self, k_trunc):
        return self

    def describe(self):
        return {"variant": self.variant, "k_trunc": self.k_trunc, "name": self.name}


class LinearQNoise(NoiseModel):
    """Linear multiplicative noise H(u)e_k = u q_k e_k with diagonal Q."""

    variant = "linear_q"

    def __init__(self, k_trunc: int, q: Callable[[np.ndarray], np.ndarray] | np.ndarray, name: str = "custom"):
        if k_trunc < 1:
            raise ValueError("k_trunc must be >= 1")
        self.k_trunc = int(k_trunc)
        if callable(q):
            self._q_fn = q
        else:
            table = np.asarray(q, dtype=float)
            self._q_fn = lambda k: np.where(k <= table.size, table[np.minimum(k, table.size) - 1], 0.0)
        self.name = name
        self._basis_cache: dict[int, np.ndarray] = {}

    @classmethod
    def geometric(cls, k_trunc: int, ratio: float, sigma: float = 1.0) -> "LinearQNoise":
        if not 0 <= ratio < 1:
            raise ValueError("geometric decay ratio must lie in [0, 1)")
        return cls(k_trunc, lambda k: sigma * ratio ** (np.asarray(k) - 1.0), f"geometric({sigma},{ratio})")

    @classmethod
    def algebraic(cls, k_trunc: int, power: float, sigma: float = 1.0) -> "LinearQNoise":
        if power <= 0:
            raise ValueError("algebraic decay power must be positive")
        return cls(k_trunc, lambda k: sigma * np.asarray(k, dtype=float) ** (-power), f"algebraic({sigma},{power})")

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self._q_fn(np.arange(1, self.k_trunc + 1)), dtype=float)

    def _basis(self, x: np.ndarray) -> np.ndarray:
        key = (x.size, float(x[0]) if x.size else 0.0)
        if key not in self._basis_cache:
            self._basis_cache.clear()
            self._basis_cache[key] = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, np.arange(1, self.k_trunc + 1)))
        return self._basis_cache[key]

    def operator(self, u, k, x):
        if not 1 <= k <= self.k_trunc:
            raise IndexError(f"mode {k} outside 1..{self.k_trunc}")
        out = u * self.q[k - 1] * np.sqrt(2.0) * np.sin(k * np.pi * x)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"H(u)e_{k} produced non-finite values")
        return out

    def operator_matrix(self, u, x):
        return np.asarray(u)[..., :, None] * (self._basis(x) * self.q)

    def apply(self, u, dw, x):
        out = u * ((dw[..., : self.k_trunc] * self.q) @ self._basis(x).T)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("noise term produced non-finite values")
        return out

    def with_truncation(self, k_trunc):
        return LinearQNoise(k_trunc, self._q_fn, self.name)

    def describe(self):
        return {"variant": self.variant, "k_trunc": self.k_trunc, "name": self.name}


def apply_noise_operator(model: NoiseModel, u_level: np.ndarray, k: int, grid: SpatialGrid) -> np.ndarray:
    if k > model.k_trunc:
        raise IndexError(f"mode {k} exceeds truncation {model.k_trunc}")
    return model.operator(np.asarray(u_level, dtype=float), k, grid.nodes)


# --- hypothesis checks --------------------------------------------------

@dataclass
class GrowthReport:
    constant: float
    constants_by_range: list[float]
    ranges: list[float]
    passed: bool

    def as_dict(self):
        return {"constant": self.constant, "constants_by_range": self.constants_by_range,
                "ranges": self.ranges, "passed": self.passed}


def _growth_constant(model: NoiseModel, x: np.ndarray, xi: np.ndarray) -> float:
    xx, ss = np.meshgrid(x, xi, indexing="ij")
    with np.errstate(over="ignore", invalid="ignore"):
        total = np.zeros_like(xx)
        for k in range(1, model.k_trunc + 1):
            total += model.operator(ss, k, xx) ** 2
        return float(np.max(total / (1.0 + ss**2)))


def check_growth(model: NoiseModel, probes: np.ndarray | None = None, grid: SpatialGrid | None = None,
                 n_doublings: int = 2, tol: float = 0.05) -> GrowthReport:
    """Best constant C in sum_k H_k(x, xi)^2 <= C (1 + xi^2) over the probes.

    The probe range is doubled ``n_doublings`` times; the verdict fails when
    the constant is non-finite or still grows by more than ``tol`` on the
    last doubling.
    """
    grid = grid or SpatialGrid(127)
    probes = np.linspace(-100.0, 100.0, 401) if probes is None else np.asarray(probes, dtype=float)
    if probes.size == 0:
        raise ValueError("probe set is empty")
    constants, ranges = [], []
    for j in range(n_doublings + 1):
        scaled = probes * 2.0**j
        try:
            c = _growth_constant(model, grid.nodes, scaled)
        except FloatingPointError:
            c = math.inf
        constants.append(c)
        ranges.append(float(np.max(np.abs(scaled))))
    finite = all(math.isfinite(c) for c in constants)
    stable = finite and (constants[-1] <= constants[-2] * (1.0 + tol) or constants[-1] == 0.0)
    return GrowthReport(constants[0], constants, ranges, bool(stable))


@dataclass
class SurrogateReport:
    a: float
    ratios: list[float]
    surrogates: list[float]
    n_interior: list[int]
    k_trunc: list[int]
    passed: bool

    @property
    def ratio(self) -> float:
        return self.ratios[-1]

    def as_dict(self):
        return {"a": self.a, "ratios": self.ratios, "surrogates": self.surrogates,
                "n_interior": self.n_interior, "k_trunc": self.k_trunc, "passed": self.passed}


def hilbert_schmidt_surrogate(model: NoiseModel, u: np.ndarray, a: float, grid: SpatialGrid) -> float:
    """(sum_k ||H(u)e_k||_{a,2}^2)^(1/2) with every mode resolved on the grid."""
    hm = model.operator_matrix(np.asarray(u, dtype=float), grid.nodes)  # (n, K)
    coeffs = sine_transform(hm.T).coeffs  # (K, n)
    return float(np.sqrt(np.sum(bessel_norm(coeffs, a) ** 2)))


def har_rhs(u: np.ndarray, a: float, grid: SpatialGrid) -> float:
    norm_a = float(bessel_norm(sine_transform(u), a))
    if a <= 1:
        return 1.0 + norm_a
    grad_norm = float(lp_norm(gradient(u, grid.h), grid.h, 2 * a))
    return 1.0 + norm_a + grad_norm**a


def check_Har_surrogate(model: NoiseModel, a: float, probes: Sequence[Callable[[np.ndarray], np.ndarray]],
                        grid: SpatialGrid | None = None, levels: int = 3, rtol: float = 1e-3) -> SurrogateReport:
    """Empirical (H_{a,2}) check with the truncated Hilbert-Schmidt norm.

    Grid and truncation are refined together (both doubled per level).  The
    check passes when the ratio stays finite and its increments contract
    from one refinement to the next, or are already below ``rtol``.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    grid = grid or SpatialGrid(63)
    ratios, surrogates, ns, ks = [], [], [], []
    for j in range(levels):
        g = SpatialGrid((grid.n_interior + 1) * 2**j - 1)
        k = min(g.n_interior, max(1, model.k_trunc * 2**j)) if model.variant == "linear_q" else model.k_trunc
        m = model.with_truncation(k)
        best_ratio, best_sur = 0.0, 0.0
        for probe in probes:
            u = np.asarray(probe(g.nodes), dtype=float)
            s = hilbert_schmidt_surrogate(m, u, a, g)
            r = s / har_rhs(u, a, g)
            if r > best_ratio:
                best_ratio, best_sur = r, s
        ratios.append(best_ratio)
        surrogates.append(best_sur)
        ns.append(g.n_interior)
        ks.append(k)
    finite = all(math.isfinite(r) for r in ratios)
    passed = finite
    if finite and len(ratios) >= 3:
        last, prev = abs(ratios[-1] - ratios[-2]), abs(ratios[-2] - ratios[-3])
        passed = last <= rtol * max(ratios[-1], 1e-300) or last < prev
    return SurrogateReport(float(a), ratios, surrogates, ns, ks, bool(passed))


# --- built-in finite-dimensional sets ----------------------------------

def additive_mode(sigma: float = 1.0, k: int = 1) -> FiniteDimNoise:
    """Constant noise sigma * e_k, independent of u."""
    return FiniteDimNoise([lambda x, xi: sigma * np.sqrt(2.0) * np.sin(k * np.pi * x) + 0.0 * xi],
                          name=f"additive_e{k}({sigma})")


FINITE_DIM_BUILTINS: dict[str, Callable[[float], FiniteDimNoise]] = {
    "additive_e1": lambda sigma: additive_mode(sigma, 1),
    "identity": lambda sigma: FiniteDimNoise([lambda x, xi: sigma * xi], name=f"identity({sigma})"),
    "sine_linear": lambda sigma: FiniteDimNoise([lambda x, xi: sigma * np.sin(np.pi * x) * xi],
                                                name=f"sine_linear({sigma})"),
    "quadratic": lambda sigma: FiniteDimNoise([lambda x, xi: sigma * xi**2], name=f"quadratic({sigma})"),
}
