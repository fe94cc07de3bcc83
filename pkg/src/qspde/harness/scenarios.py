"""Named presets and the translation from a config to solver objects."""
from __future__ import annotations

import numpy as np

from ..grid import SpatialGrid, TimeGrid
from ..noise import FINITE_DIM_BUILTINS, LinearQNoise, NoiseModel, ZeroNoise
from ..spde import CoefficientSet, SpdeProblem, make_coefficients
from .config import ConfigError, ExperimentConfig

_COMMON = {"spde.u0": "sine", "spde.nx": "127", "spde.dt": "1e-4", "spde.T": "0.1"}

PRESETS: dict[str, dict[str, str]] = {
    "HEAT": {**_COMMON, "spde.A": "heat", "spde.B": "heat", "spde.F": "heat", "noise.variant": "none",
             "reg.band.u_time": "0.9, 1.0"},
    "ADDITIVE": {**_COMMON, "spde.A": "heat", "spde.B": "heat", "spde.F": "heat",
                 "noise.variant": "finite_dim", "noise.finite_dim": "additive_e1", "noise.sigma": "1",
                 "report.mode_times": "0.05, 0.1", "reg.band.z_time": "0.35, 0.5"},
    "LINEARQ": {**_COMMON, "spde.A": "heat", "spde.B": "heat", "spde.F": "heat",
                "noise.variant": "linear_q", "noise.q_decay": "0.5", "noise.sigma": "1", "noise.k_trunc": "32"},
    "QUASI": {**_COMMON, "spde.A": "twoplus_sin", "spde.B": "burgers_flux", "spde.F": "linear_drift",
              "noise.variant": "linear_q", "noise.q_decay": "0.5", "noise.sigma": "3", "noise.k_trunc": "32",
              "reg.band.u_time": "0.30, 0.55", "reg.y_above_z": "true", "check.compat_order": "1"},
    "COMPAT_K2_PASS": {**_COMMON, "spde.u0": "sine", "noise.variant": "none", "check.compat_order": "2",
                       "checks": "compat"},
    "COMPAT_K2_FAIL": {**_COMMON, "spde.u0": "parabola", "noise.variant": "none", "check.compat_order": "2",
                       "checks": "compat"},
}


def _bump(x):
    s = 2.0 * np.asarray(x, dtype=float) - 1.0
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


PROFILES = {
    "sine": lambda x: np.sqrt(2.0) * np.sin(np.pi * x),
    "bump": _bump,
    "sine_sq": lambda x: np.sin(np.pi * x) ** 2,
    "parabola": lambda x: x * (1.0 - x),
    "zero": lambda x: np.zeros_like(np.asarray(x, dtype=float)),
}


def initial_profile(cfg: ExperimentConfig):
    base = PROFILES[cfg["spde.u0"]]
    amp = cfg["spde.u0_amp"]
    return lambda x: amp * base(np.asarray(x, dtype=float))


def coefficients(cfg: ExperimentConfig) -> CoefficientSet:
    try:
        return make_coefficients(cfg["spde.A"], cfg["spde.B"], cfg["spde.F"], nu=cfg["spde.nu"],
                                 mu=cfg["spde.mu"], burgers_clip=cfg["spde.burgers_clip"],
                                 drift_rate=cfg["spde.drift_rate"])
    except ValueError as exc:
        msg = str(exc)
        if "nu" in msg and "mu" in msg:
            raise ConfigError(f"spde.nu / spde.mu: {msg}") from None
        raise ConfigError(f"spde.A / spde.B / spde.F: {msg}") from None


def k_trunc(cfg: ExperimentConfig, nx: int | None = None) -> int:
    nx = cfg["spde.nx"] if nx is None else nx
    return cfg["noise.k_trunc"] or nx


def noise_model(cfg: ExperimentConfig, nx: int | None = None) -> NoiseModel:
    variant = cfg["noise.variant"]
    sigma = cfg["noise.sigma"]
    if variant == "none":
        return ZeroNoise()
    if variant == "finite_dim":
        return FINITE_DIM_BUILTINS[cfg["noise.finite_dim"]](sigma)
    k = k_trunc(cfg, nx)
    if cfg["noise.q_power"] > 0:
        return LinearQNoise.algebraic(k, cfg["noise.q_power"], sigma)
    return LinearQNoise.geometric(k, cfg["noise.q_decay"], sigma)


def grids(cfg: ExperimentConfig, nx: int | None = None, dt: float | None = None) -> tuple[SpatialGrid, TimeGrid]:
    nx = cfg["spde.nx"] if nx is None else nx
    dt = cfg["spde.dt"] if dt is None else dt
    try:
        return SpatialGrid(nx), TimeGrid.from_step(dt, cfg["spde.T"])
    except ValueError as exc:
        raise ConfigError(f"spde.nx / spde.dt / spde.T: {exc}") from None


def problem(cfg: ExperimentConfig, nx: int | None = None, dt: float | None = None) -> SpdeProblem:
    grid, times = grids(cfg, nx, dt)
    return SpdeProblem(grid, times, coefficients(cfg), noise_model(cfg, nx), initial_profile(cfg),
                       cfg["spde.blowup_ceiling"])


def is_pure_diffusion(cfg: ExperimentConfig) -> bool:
    return (cfg["noise.variant"] == "none" and cfg["spde.B"] in ("heat", "zero")
            and cfg["spde.F"] in ("heat", "zero"))


def analytic_heat(cfg: ExperimentConfig):
    """Exact solution when the setup is the heat equation started from a multiple of e_1."""
    if not (cfg["noise.variant"] == "none" and cfg["spde.A"] in ("heat", "one") and is_pure_diffusion(cfg)
            and cfg["spde.u0"] in ("sine", "zero")):
        return None
    amp = cfg["spde.u0_amp"] if cfg["spde.u0"] == "sine" else 0.0
    return lambda t, x: amp * np.exp(-np.pi**2 * np.asarray(t))[:, None] * np.sqrt(2.0) * np.sin(np.pi * x)[None]
