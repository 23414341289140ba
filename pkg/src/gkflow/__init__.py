"""Numerical laboratory for the scalar-potential pluriclosed flow on split tori."""

from .config import RunConfig, load_config, parse_config, serialize
from .errors import (
    BackgroundExpired,
    ConeViolation,
    ConfigError,
    GKFlowError,
    InsufficientSnapshots,
    NonFiniteField,
)
from .flow import Background, ClassData, Controller, PotentialState, Trajectory, evolve, step, tau_star
from .geometry import SplitMetric, p_direct, p_split, torsion
from .grid import FULL, REDUCED, GridSpec, ScalarField, Spectrum
from .scenarios import build_scenario

__version__ = "0.1.0"

__all__ = [
    "FULL",
    "REDUCED",
    "Background",
    "BackgroundExpired",
    "ClassData",
    "ConeViolation",
    "ConfigError",
    "Controller",
    "GKFlowError",
    "GridSpec",
    "InsufficientSnapshots",
    "NonFiniteField",
    "PotentialState",
    "RunConfig",
    "ScalarField",
    "Spectrum",
    "SplitMetric",
    "Trajectory",
    "build_scenario",
    "evolve",
    "load_config",
    "p_direct",
    "p_split",
    "parse_config",
    "serialize",
    "step",
    "tau_star",
    "torsion",
]
