"""Plain-text ``key = value`` run configuration."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .grid import FULL, REDUCED, EPS_POS, GridSpec
from .scenarios import SCENARIOS

CHECKS = (
    "curvature",
    "halfdet",
    "fdot",
    "torsion_potential",
    "norm_evolution",
    "trace_identities",
    "psi_vanishing",
    "monitors",
    "gradient",
    "normalized",
)


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "flat-stationary"
    grid_mode: str = REDUCED
    n1: int = 64
    n2: int = 16
    n3: int = 64
    n4: int = 16
    l1: float = 2 * math.pi
    l2: float = 2 * math.pi
    l3: float = 2 * math.pi
    l4: float = 2 * math.pi
    initial_potential: Optional[str] = None
    background: Optional[str] = None
    heat_initial: str = "sin(x1) + sin(x3)"
    t_end: float = 1.0
    snapshot_dt: float = 0.0
    monitor_dt: float = 0.0
    sigma_cfl: float = 0.25
    dt: Optional[float] = None
    eps_pos: float = EPS_POS
    mub_A: float = 1.0
    dealias: bool = False
    checks: tuple = ()
    refine_levels: int = 4
    refine_dt0: Optional[float] = None
    min_order: float = 1.7
    drift_tol: float = 1e-8
    seed: int = 0

    @property
    def grid(self) -> GridSpec:
        if self.grid_mode == REDUCED:
            return GridSpec(REDUCED, (self.n1, self.n3), (self.l1, self.l3))
        return GridSpec(FULL, (self.n1, self.n2, self.n3, self.n4), (self.l1, self.l2, self.l3, self.l4))

    @property
    def expanded_checks(self):
        if "all" in self.checks:
            return CHECKS
        return self.checks


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, raw, line=None):
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "Optional[float]":
            return None if text.lower() in ("", "none") else float(text)
        if kind == "Optional[str]":
            return None if text.lower() in ("", "none") else text
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind == "tuple":
            return tuple(p.strip() for p in text.split(",") if p.strip())
        return text
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as {kind}", key=key, line=line) from None


def validate(cfg: RunConfig) -> RunConfig:
    def bad(key, why):
        raise ConfigError(why, key=key)

    if cfg.scenario not in SCENARIOS:
        bad("scenario", f"unknown scenario {cfg.scenario!r}")
    if cfg.grid_mode not in (REDUCED, FULL):
        bad("grid_mode", f"unknown grid mode {cfg.grid_mode!r}")
    used = ("n1", "n3") if cfg.grid_mode == REDUCED else ("n1", "n2", "n3", "n4")
    for key in used:
        n = getattr(cfg, key)
        if n < 8 or n % 2:
            bad(key, f"grid size must be even and >= 8, got {n}")
    for key in ("l1", "l2", "l3", "l4"):
        if not (getattr(cfg, key) > 0 and math.isfinite(getattr(cfg, key))):
            bad(key, "periods must be positive")
    if not (cfg.t_end > 0 and math.isfinite(cfg.t_end)):
        bad("t_end", "t_end must be positive")
    for key in ("snapshot_dt", "monitor_dt"):
        v = getattr(cfg, key)
        if v < 0 or v > cfg.t_end:
            bad(key, f"{key} must lie in [0, t_end] (0 disables)")
    if not cfg.sigma_cfl > 0:
        bad("sigma_cfl", "sigma_cfl must be positive")
    if cfg.dt is not None and not cfg.dt > 0:
        bad("dt", "dt must be positive")
    if not cfg.eps_pos > 0:
        bad("eps_pos", "eps_pos must be positive")
    if not cfg.mub_A > 0:
        bad("mub_A", "mub_A must be positive")
    if cfg.refine_levels < 2:
        bad("refine_levels", "a refinement study needs at least two levels")
    if cfg.refine_dt0 is not None and not cfg.refine_dt0 > 0:
        bad("refine_dt0", "refine_dt0 must be positive")
    if not cfg.drift_tol >= 0:
        bad("drift_tol", "drift_tol must be nonnegative")
    for c in cfg.checks:
        if c != "all" and c not in CHECKS:
            bad("checks", f"unknown check {c!r}; choose from all, {', '.join(CHECKS)}")
    if cfg.scenario == "custom" and (cfg.background is None or cfg.initial_potential is None):
        bad("scenario", "custom scenario needs background and initial_potential")
    return cfg


def parse_config(text: str = "", overrides: dict = None) -> RunConfig:
    """Read ``key = value`` lines (``#`` starts a comment), then apply overrides."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", line=lineno)
        if key not in _FIELD_TYPES:
            raise ConfigError("unknown configuration key", key=key, line=lineno)
        if key in values:
            raise ConfigError("duplicate configuration key", key=key, line=lineno)
        values[key] = _convert(key, value, lineno)
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError("unknown configuration key", key=key)
        values[key] = _convert(key, value) if isinstance(value, str) else value
    return validate(RunConfig(**values))


def load_config(path=None, overrides: dict = None) -> RunConfig:
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read configuration file: {e.strerror}", key=str(path)) from None
    return parse_config(text, overrides)


def serialize(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            text = "none"
        elif isinstance(v, tuple):
            text = ",".join(v)
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}".rstrip())
    return "\n".join(lines) + "\n"


def replace(cfg: RunConfig, **changes) -> RunConfig:
    return validate(dataclasses.replace(cfg, **changes))
