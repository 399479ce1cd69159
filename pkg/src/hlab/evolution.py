"""Time stepping for u_t = u_xx - u^2 + phi and for its linearization.

The nonlinear stepper is Crank-Nicolson in the diffusion with the reaction
evaluated at an implicit-diffusion midpoint predictor:

    (I - dt/4 D) u*      = (I + dt/4 D) u + dt/2 R(u)
    (I - dt/2 D) u^{n+1} = (I + dt/2 D) u + dt R(u*),      R(u) = -u^2 + phi

which is second order and leaves every finite-difference steady state fixed
exactly (both stages reproduce f when D f + R(f) = 0).
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .errors import AmbiguousConvergence
from .grid import Grid, GridFunction, forcing_values, write_profile_csv, read_profile_csv, make_grid

# sup-norm growth is only policed above this scale
GROWTH_SCALE = 10.0
MAX_GROWTH = 2.0
LINEAR_CEILING = 1e100


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 0.01
    t_max: float = 400.0
    blowup_threshold: float = 1e6
    snapshot_stride: int = 10
    adaptive: bool = True
    tol_conv: float = 1e-4
    t_dwell: float = 5.0
    min_dt: float = 1e-12

    def __post_init__(self):
        if not self.dt > 0 or not self.t_max > 0:
            raise ValueError("dt and t_max must be positive")
        if not self.blowup_threshold > 1.0:
            raise ValueError("blow-up threshold must exceed 1")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot stride must be at least 1")

    def with_(self, **kw) -> "StepperConfig":
        d = asdict(self)
        d.update(kw)
        return StepperConfig(**d)


# ---------------------------------------------------------------- outcomes

@dataclass(frozen=True)
class Converged:
    equilibrium_label: str
    t_enter: float
    kind: str = "converged"

    def to_json(self):
        return {"kind": self.kind, "equilibrium_label": self.equilibrium_label, "t_enter": self.t_enter}


@dataclass(frozen=True)
class BlowUp:
    t_star_bracket: tuple
    kind: str = "blowup"

    def to_json(self):
        return {"kind": self.kind, "t_star_bracket": list(self.t_star_bracket)}


@dataclass(frozen=True)
class Undetermined:
    t_max: float
    kind: str = "undetermined"

    def to_json(self):
        return {"kind": self.kind, "t_max": self.t_max}


def outcome_from_json(d: dict):
    if d["kind"] == "converged":
        return Converged(d["equilibrium_label"], d["t_enter"])
    if d["kind"] == "blowup":
        return BlowUp(tuple(d["t_star_bracket"]))
    return Undetermined(d["t_max"])


# ---------------------------------------------------------------- trajectories

@dataclass(eq=False)
class Trajectory:
    grid: Grid
    times: np.ndarray
    values: np.ndarray = field(repr=False)
    c: float | None = None
    config: StepperConfig | None = None
    outcome: object = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size, self.grid.n):
            raise ValueError("frames do not match times and grid")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("frame times must increase strictly")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("frames must be finite")

    def __len__(self):
        return self.times.size

    def frame(self, i) -> GridFunction:
        return GridFunction(self.grid, self.values[i])

    @property
    def final(self) -> GridFunction:
        return self.frame(-1)

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation between neighbouring frames."""
        t = float(np.clip(t, self.times[0], self.times[-1]))
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        j = min(max(j, 0), self.times.size - 2) if self.times.size > 1 else 0
        if self.times.size == 1:
            return self.values[0]
        w = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]

    def shifted(self, t0: float) -> "Trajectory":
        return Trajectory(self.grid, self.times - t0, self.values, self.c, self.config, self.outcome)

    def save(self, directory) -> list:
        """Frame CSVs plus manifest.json; returns the file names written."""
        os.makedirs(directory, exist_ok=True)
        names = []
        for i in range(len(self)):
            name = f"frame_{i:05d}.csv"
            write_profile_csv(os.path.join(directory, name), self.grid.x, self.values[i])
            names.append(name)
        man = {"c": self.c, "dt": self.config.dt if self.config else None,
               "times": [float(t) for t in self.times],
               "outcome": self.outcome.to_json() if self.outcome is not None else None,
               "frames": names}
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(man, fh, indent=1)
        return names + ["manifest.json"]

    @classmethod
    def load(cls, directory) -> "Trajectory":
        with open(os.path.join(directory, "manifest.json")) as fh:
            man = json.load(fh)
        frames = man.get("frames") or sorted(
            f for f in os.listdir(directory) if f.startswith("frame_") and f.endswith(".csv"))
        rows = [read_profile_csv(os.path.join(directory, f)) for f in frames]
        x = rows[0][0]
        grid = make_grid(x[-1], x.size)
        out = man.get("outcome")
        cfg = StepperConfig(dt=man["dt"]) if man.get("dt") else None
        return cls(grid, man["times"], np.array([r[1] for r in rows]), man.get("c"), cfg,
                   outcome_from_json(out) if out else None)


def constant_trajectory(f: GridFunction, times, c=None) -> Trajectory:
    times = np.asarray(times, dtype=float)
    return Trajectory(f.grid, times, np.tile(f.values, (times.size, 1)), c)


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def _factor(r, m):
    # Thomas factors of tridiag(-r, 1 + 2r, -r), size m
    cp = np.empty(m)
    inv = np.empty(m)
    b = 1.0 + 2.0 * r
    inv[0] = 1.0 / b
    cp[0] = -r * inv[0]
    for i in range(1, m):
        inv[i] = 1.0 / (b + r * cp[i - 1])
        cp[i] = -r * inv[i]
    return cp, inv


@njit(cache=True)
def _solve(r, cp, inv, d, out):
    m = d.shape[0]
    out[0] = d[0] * inv[0]
    for i in range(1, m):
        out[i] = (d[i] + r * out[i - 1]) * inv[i]
    for i in range(m - 2, -1, -1):
        out[i] -= cp[i] * out[i + 1]


@njit(cache=True)
def _imex_step(u, p, dt, r4, cp4, inv4, r2, cp2, inv2, out):
    n = u.shape[0]
    m = n - 2
    rhs = np.empty(m)
    us = np.empty(m)
    for i in range(m):
        j = i + 1
        lap = u[j + 1] - 2.0 * u[j] + u[j - 1]
        rhs[i] = u[j] + r4 * lap + 0.5 * dt * (p[j] - u[j] * u[j])
    _solve(r4, cp4, inv4, rhs, us)
    for i in range(m):
        j = i + 1
        lap = u[j + 1] - 2.0 * u[j] + u[j - 1]
        rhs[i] = u[j] + r2 * lap + dt * (p[j] - us[i] * us[i])
    out[0] = 0.0
    out[n - 1] = 0.0
    _solve(r2, cp2, inv2, rhs, out[1:n - 1])


@njit(cache=True)
def _advance(u, p, dt, r4, cp4, inv4, r2, cp2, inv2, k, scale, growth, threshold, policed):
    """Up to k steps in place.  Status 0 ok, 1 growth limit hit (u untouched by
    the failed step), 2 threshold passed or non-finite (u holds the offending step)."""
    buf = np.empty_like(u)
    s_old = 0.0
    for i in range(u.shape[0]):
        s_old = max(s_old, abs(u[i]))
    for step in range(k):
        _imex_step(u, p, dt, r4, cp4, inv4, r2, cp2, inv2, buf)
        s_new = 0.0
        bad = False
        for i in range(u.shape[0]):
            a = abs(buf[i])
            if not a < 1e308:
                bad = True
            s_new = max(s_new, a)
        if bad or s_new > threshold:
            u[:] = buf
            return step, 2, s_new
        if policed and s_old > scale and s_new > growth * s_old:
            return step, 1, s_new
        u[:] = buf
        s_old = s_new
    return k, 0, s_old


class IMEXStepper:
    """Precomputed tridiagonal factors for one (grid, c, dt)."""

    def __init__(self, grid: Grid, c, dt: float):
        self.grid = grid
        self.c = c
        self.p = forcing_values(grid.x, c)
        self.set_dt(dt)

    def set_dt(self, dt: float):
        self.dt = float(dt)
        h2 = self.grid.h ** 2
        m = self.grid.n - 2
        self.r4 = self.dt / (4.0 * h2)
        self.r2 = self.dt / (2.0 * h2)
        self.cp4, self.inv4 = _factor(self.r4, m)
        self.cp2, self.inv2 = _factor(self.r2, m)

    def step(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        _imex_step(u, self.p, self.dt, self.r4, self.cp4, self.inv4,
                   self.r2, self.cp2, self.inv2, out)
        return out

    def advance(self, u, k, threshold, policed=True):
        return _advance(u, self.p, self.dt, self.r4, self.cp4, self.inv4, self.r2, self.cp2,
                        self.inv2, k, GROWTH_SCALE, MAX_GROWTH, threshold, policed)


def step(u: GridFunction, dt: float, c) -> GridFunction:
    """One IMEX step; Dirichlet ends are reset to 0.  Overflow raises FloatingPointError."""
    out = IMEXStepper(u.grid, c, dt).step(np.array(u.values))
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("overflow in IMEX step")
    return GridFunction(u.grid, out)


# ---------------------------------------------------------------- evolve / classify

def _match(u, equilibria, tol):
    hits = [e for e in equilibria if np.abs(u - e.profile.values).max() <= tol]
    if len(hits) > 1:
        raise AmbiguousConvergence(
            f"{len(hits)} equilibria within {tol:g}: " + ", ".join(e.label for e in hits))
    return hits[0] if hits else None


def evolve(u0: GridFunction, cfg: StepperConfig, c, equilibria=(), record: bool = True):
    """Forward run; returns (Trajectory, Outcome).

    Frames are kept every ``snapshot_stride`` steps (and at the end) when
    ``record`` is set, otherwise only the first and last frame.  Convergence
    is tested on those frame times.
    """
    grid = u0.grid
    st = IMEXStepper(grid, c, cfg.dt)
    u = np.array(u0.values, dtype=float)
    u[0] = u[-1] = 0.0
    t = 0.0
    times, frames = [0.0], [u.copy()]
    t_enter, hit = None, None
    outcome = None
    tiny = 1e-9 * cfg.dt
    blown = False
    while outcome is None:
        if t >= cfg.t_max - tiny:
            outcome = Undetermined(cfg.t_max)
            break
        k = min(cfg.snapshot_stride, int(np.ceil((cfg.t_max - t) / st.dt - 1e-9)))
        policed = cfg.adaptive and st.dt * 0.5 >= cfg.min_dt
        done, status, s = st.advance(u, k, cfg.blowup_threshold, policed)
        t_prev = t + done * st.dt
        if status == 2:
            # past the threshold the Riccati tail needs about 1/|u| more time
            tail = 1.0 / s if np.isfinite(s) else 0.0
            outcome = BlowUp((t_prev, t_prev + st.dt + tail))
            blown = True
            break
        t = t_prev
        if status == 1:
            st.set_dt(st.dt * 0.5)
            if done == 0:
                continue
        if record:
            times.append(t)
            frames.append(u.copy())
        if equilibria:
            e = _match(u, equilibria, cfg.tol_conv)
            if e is not None and hit is e:
                if t - t_enter >= cfg.t_dwell - tiny:
                    outcome = Converged(e.label, t_enter)
            elif e is not None:
                hit, t_enter = e, t
            else:
                hit, t_enter = None, None
    if not blown and t > times[-1] + tiny:
        times.append(t)
        frames.append(u.copy())
    traj = Trajectory(grid, np.array(times), np.array(frames), c, cfg, outcome)
    return traj, outcome


def classify(traj: Trajectory, equilibria, cfg: StepperConfig | None = None):
    """Outcome from frames alone: a blow-up recorded on the trajectory passes through;
    otherwise Converged once one equilibrium stays within tol_conv for t_dwell."""
    cfg = cfg or traj.config or StepperConfig()
    if isinstance(traj.outcome, BlowUp):
        return traj.outcome
    hit, t_enter = None, None
    for t, u in zip(traj.times, traj.values):
        e = _match(u, equilibria, cfg.tol_conv)
        if e is not None and e is hit:
            if t - t_enter >= cfg.t_dwell - 1e-9:
                return Converged(e.label, float(t_enter))
        elif e is not None:
            hit, t_enter = e, float(t)
        else:
            hit, t_enter = None, None
    return Undetermined(float(traj.times[-1]))


# ---------------------------------------------------------------- linearization

@njit(cache=True)
def _linear_cn_step(v, q, dt, h, out):
    # (I - dt/2 H) v+ = (I + dt/2 H) v,  H = D - 2 q,  Dirichlet
    n = v.shape[0]
    m = n - 2
    r = 0.5 * dt / (h * h)
    cp = np.empty(m)
    d = np.empty(m)
    for i in range(m):
        j = i + 1
        lap = v[j + 1] - 2.0 * v[j] + v[j - 1]
        rhs = v[j] + r * lap - dt * q[j] * v[j]
        b = 1.0 + 2.0 * r + dt * q[j]
        if i == 0:
            den = b
            d[i] = rhs / den
        else:
            den = b + r * cp[i - 1]
            d[i] = (rhs + r * d[i - 1]) / den
        cp[i] = -r / den
    out[0] = 0.0
    out[n - 1] = 0.0
    out[m] = d[m - 1]
    for i in range(m - 2, -1, -1):
        d[i] -= cp[i] * d[i + 1]
        out[i + 1] = d[i]


def evolve_linearized(v0: GridFunction, base: Trajectory, cfg: StepperConfig,
                      t_span=None) -> Trajectory:
    """v_t = v_xx - 2 u(t) v along ``base`` (u linearly interpolated, frozen at each step's midpoint).

    Runs over ``t_span`` (default: the base's time range); stops early once
    |v| passes ``LINEAR_CEILING``, which is expected along unstable directions.
    """
    t0, t1 = t_span if t_span is not None else (base.times[0], base.times[-1])
    if t0 < base.times[0] - 1e-12 or t1 > base.times[-1] + 1e-12:
        raise ValueError("base trajectory does not cover the requested time span")
    grid = v0.grid
    nsteps = int(round((t1 - t0) / cfg.dt))
    dt = (t1 - t0) / nsteps if nsteps else cfg.dt
    v = np.array(v0.values, dtype=float)
    v[0] = v[-1] = 0.0
    out = np.empty_like(v)
    times, frames = [t0], [v.copy()]
    for i in range(nsteps):
        t = t0 + i * dt
        _linear_cn_step(v, base.at(t + 0.5 * dt), dt, grid.h, out)
        v, out = out, v
        if (i + 1) % cfg.snapshot_stride == 0 or i + 1 == nsteps:
            if not np.abs(v).max() < LINEAR_CEILING:
                break
            times.append(t0 + (i + 1) * dt)
            frames.append(v.copy())
    return Trajectory(grid, np.array(times), np.array(frames), base.c, cfg)


def fit_growth_rate(traj: Trajectory, t_from: float | None = None) -> float:
    """Least-squares slope of log sup|v| against t."""
    s = np.abs(traj.values).max(axis=1)
    keep = s > 0
    if t_from is not None:
        keep &= traj.times >= t_from
    return float(np.polyfit(traj.times[keep], np.log(s[keep]), 1)[0])
