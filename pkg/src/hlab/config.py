"""Run configuration: flat ``key = value`` text files with ``#`` comments."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DomainError
from .evolution import StepperConfig
from .grid import Grid, make_grid


class ConfigError(DomainError):
    pass


def _floats(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


@dataclass
class RunConfig:
    # grid
    X: float = 20.0
    n: int = 801
    # stepper
    dt: float = 0.01
    t_max: float = 400.0
    blowup_threshold: float = 1e6
    snapshot_stride: int = 10
    t_dwell: float = 5.0
    # tolerances
    tol_eq: float = 1e-9
    tol_shoot: float = 1e-6
    tol_eig: float = 1e-8
    tol_bisect: float = 1e-11
    tol_A: float = 1e-3
    tol_theta: float = 1e-6
    tol_conv: float = 1e-4
    gap_tol: float = 1e-3
    # problem
    c: float | None = None
    forcing: str = "on"                # off: phi = 0 whatever c is
    c_values: list | None = None       # None: the subcommand default; empty: nothing to scan
    seed_lo: float = -3.0
    seed_hi: float = 3.0
    seed_count: int = 31
    continuation: str = "auto"
    cont_step: float = 1e-3
    # frontier
    A_lo: float = -3.0
    A_hi: float = -1.0
    bump_width: float = 10.0
    # fan
    A: float | None = None
    thetas: list = field(default_factory=list)
    theta: float = 0.0
    fan_t_max: float = 800.0
    # orbit spectrum
    trajectory: str = ""
    k_trace: int = 4
    # evolve
    initial: str = "bump"
    u0_value: float = -1.0
    # verify
    decay_a: float = 0.01
    verify_T: float = 20.0
    seed: int = 0
    out: str = ""

    TOLERANCES = ("tol_eq", "tol_shoot", "tol_eig", "tol_bisect", "tol_A", "tol_theta",
                  "tol_conv", "gap_tol")

    def __post_init__(self):
        for name in self.TOLERANCES:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n < 3 or self.n % 2 == 0:
            raise ConfigError(f"n must be odd and at least 3, got {self.n}")
        if not self.X > 0:
            raise ConfigError(f"X must be positive, got {self.X}")
        if self.continuation not in ("auto", "yes", "no"):
            raise ConfigError("continuation must be auto, yes or no")
        if self.forcing not in ("on", "off"):
            raise ConfigError("forcing must be on or off")

    # ------------------------------------------------------------ parsing
    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        types = {f.name: f for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            kw[key] = cls._convert(key, value, source, lineno)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.parse(fh.read(), str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc

    @staticmethod
    def _convert(key, value, source, lineno):
        try:
            if key in ("c_values", "thetas"):
                if ":" in value:
                    lo, hi, step = (float(v) for v in value.split(":"))
                    count = int(round((hi - lo) / step)) + 1
                    return [float(v) for v in np.round(np.linspace(lo, hi, count), 12)]
                return _floats(value)
            if key in ("n", "snapshot_stride", "seed_count", "k_trace", "seed"):
                return int(value)
            if key in ("continuation", "initial", "trajectory", "out", "forcing"):
                return value
            if key in ("c", "A"):
                return None if value.lower() in ("", "none") else float(value)
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {value!r}") from exc

    # ------------------------------------------------------------ views
    def grid(self) -> Grid:
        return make_grid(self.X, self.n)

    def stepper(self, t_max: float | None = None) -> StepperConfig:
        return StepperConfig(dt=self.dt, t_max=t_max or self.t_max,
                             blowup_threshold=self.blowup_threshold,
                             snapshot_stride=self.snapshot_stride, tol_conv=self.tol_conv,
                             t_dwell=self.t_dwell)

    def strict(self) -> "RunConfig":
        """Tolerances divided by 10 on a twice finer grid and time step."""
        kw = {name: getattr(self, name) / 10 for name in self.TOLERANCES}
        return dataclasses.replace(self, n=2 * self.n - 1, dt=self.dt / 2,
                                   snapshot_stride=self.snapshot_stride * 2, **kw)

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
