"""Simulation and regularity diagnostics for quasilinear parabolic SPDEs on (0, 1)."""

__version__ = "0.1.0"

from .grid import SpaceTimeField, SpatialGrid, TimeGrid
from .noise import FiniteDimNoise, LinearQNoise, WienerPath, ZeroNoise, sample_path, sample_paths
from .spde import BlowUpError, CoefficientSet, EllipticityError, SpdeProblem, SpdeRun, make_coefficients, run
from .split import DecompositionResult, decompose

__all__ = [
    "SpatialGrid", "TimeGrid", "SpaceTimeField",
    "WienerPath", "sample_path", "sample_paths", "ZeroNoise", "FiniteDimNoise", "LinearQNoise",
    "CoefficientSet", "make_coefficients", "SpdeProblem", "SpdeRun", "run", "BlowUpError", "EllipticityError",
    "DecompositionResult", "decompose",
]
