"""Flat key-value scenario configuration with [section] headers.

The format is diffable text:

    [plant]
    rho0 = 1.0
    ...

parse_config(serialize_config(cfg)) reproduces cfg exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .core import PTConfig, SpatialGrid, StringParams, check_prescribed_time, wave_speed
from .kernel_fd import CFLError

__all__ = ["ScenarioConfig", "parse_config", "serialize_config", "load_config"]

_SCENARIOS = ("open", "closed", "target", "baseline", "sweep")
_IC_NAMES = ("parabolic", "half_sine", "bump", "ramp")


@dataclass
class ScenarioConfig:
    """Everything one run needs; defaults reproduce the reference setup."""

    # plant
    rho0: float = 1.0
    Tf: float = 45.0
    M: float = 1.0
    # control
    T: float = 3.0
    mu0: float = 5.0
    eps_stop: float = 0.05
    # grids
    nx: int = 201
    kernel_n: int = 51
    dt_factor: float = 0.9        # plant dt = dt_factor * dx / c
    kernel_dt_factor: float = 0.5  # kernel dt = factor * dx/(c sqrt(2))
    # scenario
    scenario: str = "closed"
    initial_condition: str = "parabolic"
    t_end: float | None = None
    gain_freeze_time: float | None = None
    trace_source: str = "series"   # series | fd
    out_dir: str = "out"
    svg: bool = False

    def validate(self) -> None:
        params = self.string_params()
        cfg = self.pt_config()
        if self.scenario not in _SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {_SCENARIOS}")
        if self.initial_condition not in _IC_NAMES:
            raise ValueError(f"unknown initial condition {self.initial_condition!r}")
        if self.scenario in ("closed", "target", "baseline", "sweep"):
            check_prescribed_time(params, cfg)
        if not 0 < self.dt_factor <= 1.0:
            raise CFLError(f"dt_factor={self.dt_factor} violates the plant step bound")
        if not 0 < self.kernel_dt_factor <= 1.0:
            raise CFLError(f"kernel_dt_factor={self.kernel_dt_factor} violates the kernel step bound")
        if self.trace_source not in ("series", "fd"):
            raise ValueError(f"unknown trace source {self.trace_source!r}")
        if self.nx < 3 or self.kernel_n < 3:
            raise ValueError("grids need at least 3 nodes")

    def string_params(self) -> StringParams:
        return StringParams(rho0=self.rho0, Tf=self.Tf, M=self.M)

    def pt_config(self) -> PTConfig:
        return PTConfig(T=self.T, mu0=self.mu0, eps_stop=self.eps_stop)

    def grid(self) -> SpatialGrid:
        return SpatialGrid(nx=self.nx)

    def plant_dt(self) -> float:
        g = self.grid()
        return self.dt_factor * g.dx / wave_speed(self.string_params())

    def kernel_dt(self) -> float:
        import numpy as np
        dx = 1.0 / (self.kernel_n - 1)
        return self.kernel_dt_factor * dx / (wave_speed(self.string_params()) * np.sqrt(2.0))

    def run_t_end(self) -> float:
        if self.t_end is not None:
            return self.t_end
        if self.scenario == "open":
            return self.T
        return self.T - self.eps_stop


_SECTIONS = {
    "plant": ("rho0", "Tf", "M"),
    "control": ("T", "mu0", "eps_stop"),
    "grids": ("nx", "kernel_n", "dt_factor", "kernel_dt_factor"),
    "run": ("scenario", "initial_condition", "t_end", "gain_freeze_time",
            "trace_source", "out_dir", "svg"),
}


def serialize_config(cfg: ScenarioConfig) -> str:
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for k in keys:
            v = getattr(cfg, k)
            lines.append(f"{k} = {'' if v is None else v}")
        lines.append("")
    return "\n".join(lines)


def _coerce(name: str, raw: str):
    raw = raw.strip()
    if raw == "":
        return None
    kind = ScenarioConfig.__dataclass_fields__[name].type
    if name in ("nx", "kernel_n"):
        return int(raw)
    if name == "svg":
        return raw.lower() in ("1", "true", "yes")
    if name in ("scenario", "initial_condition", "trace_source", "out_dir"):
        return raw
    return float(raw)


def parse_config(text: str) -> ScenarioConfig:
    cfg = ScenarioConfig()
    known = {f.name for f in fields(ScenarioConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    return cfg


def load_config(path) -> ScenarioConfig:
    cfg = parse_config(Path(path).read_text())
    cfg.validate()
    return cfg
