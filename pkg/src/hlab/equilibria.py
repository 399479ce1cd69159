"""Steady states f'' - f^2 + phi = 0, their continuation in c, and branch events.

A steady state is labelled by its shooting state (f(0), f'(0), c).  Solving
goes in three passes:

1. a seed profile from the initial value problem started at the guess, cut
   off where it runs away;
2. damped Newton on the finite-difference profile, which has a far larger
   basin than the shooting map (whose slope is in the thousands), with
   pseudo-transient relaxation as the fallback;
3. damped Newton on the shooting map from the state read off that profile.

The reported state is the shooting root; the stored profile and its residual
come from the finite-difference solve.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.linalg import lapack
from scipy.sparse.linalg import spsolve

from .errors import Diverged, NoConvergence, NotIsolated, StepCollapse
from .grid import Grid, GridFunction, forcing_values
from .spectrum import assemble_h, eigenfunction, eigenvalues_top

TOL_SHOOT = 1e-6
TOL_EQ = 1e-9
TOL_BOUNDARY = 1e-3
DEDUP_TOL = 1e-6
SHOOT_GUARD = 1e6
SEED_CLIP = 4.0
MAX_HALVINGS = 12
# Decaying solutions satisfy f'' = f^2 where phi has died out, so f >= 0 there.
TAIL_START = 8.0
TAIL_FLOOR = -1e-10
EVENT_C_WIDTH = 1e-4
# The two discretizations put f(0) about 3e-4 apart at h = 0.05.
STATE_MATCH = 1e-2

COLORS = {0: "green", 1: "blue", 2: "red"}


@njit(cache=True)
def _phi(x, c, forced):
    if not forced:
        return 0.0
    return (x * x - c) * math.exp(-0.5 * x * x)


@njit(cache=True)
def _rk4_path(f0, fp0, c, forced, h, nsteps, guard, out):
    """RK4 for y'' = y^2 - phi from x=0 with step h; fills out[0..k], returns k."""
    y = f0
    p = fp0
    x = 0.0
    out[0] = y
    for i in range(nsteps):
        a1 = y * y - _phi(x, c, forced)
        pm = _phi(x + 0.5 * h, c, forced)
        y2 = y + 0.5 * h * p
        p2 = p + 0.5 * h * a1
        a2 = y2 * y2 - pm
        y3 = y + 0.5 * h * p2
        p3 = p + 0.5 * h * a2
        a3 = y3 * y3 - pm
        y4 = y + h * p3
        p4 = p + h * a3
        a4 = y4 * y4 - _phi(x + h, c, forced)
        y = y + h / 6.0 * (p + 2.0 * p2 + 2.0 * p3 + p4)
        p = p + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        x = x + h
        if not abs(y) < guard:
            return i
        out[i + 1] = y
    return nsteps


@dataclass(frozen=True)
class ShootState:
    f0: float
    fp0: float
    c: float | None

    def __post_init__(self):
        if not (math.isfinite(self.f0) and math.isfinite(self.fp0)):
            raise ValueError("shoot state must be finite")
        if self.c is not None and not math.isfinite(self.c):
            raise ValueError("c must be finite")

    def distance(self, other: "ShootState") -> float:
        return max(abs(self.f0 - other.f0), abs(self.fp0 - other.fp0))


@dataclass(frozen=True)
class Miss:
    right: float
    left: float
    diverged: bool

    def __iter__(self):
        return iter((self.right, self.left))

    @property
    def size(self) -> float:
        return max(abs(self.right), abs(self.left))


def _half_steps(grid: Grid) -> int:
    return (grid.n - 1) // 2


def _forced(c):
    return (0.0, False) if c is None else (float(c), True)


def _shot(f0, fp0, c, grid, guard=SHOOT_GUARD):
    cc, forced = _forced(c)
    k = _half_steps(grid)
    buf = np.empty(k + 1)
    reached = _rk4_path(f0, fp0, cc, forced, grid.h, k, guard, buf)
    if reached < k:
        return math.copysign(guard, buf[reached]), True
    return buf[k], False


def shoot_residual(s: ShootState, grid: Grid) -> Miss:
    """Misses f(+X), f(-X) of the shot from x=0; run-away shots report +-guard and diverged."""
    r, dr = _shot(s.f0, s.fp0, s.c, grid)
    # phi is even, so the left shot is the right shot with f'(0) reversed
    l, dl = _shot(s.f0, -s.fp0, s.c, grid)
    return Miss(r, l, dr or dl)


def shot_profile(s: ShootState, grid: Grid, clip: float = SEED_CLIP) -> np.ndarray:
    """Grid samples of the shot from s; beyond the first |f| > clip the samples are 0."""
    cc, forced = _forced(s.c)
    k = _half_steps(grid)
    out = np.zeros(grid.n)
    for sign, side in ((1.0, slice(grid.mid, None)), (-1.0, slice(grid.mid, None, -1))):
        buf = np.zeros(k + 1)
        reached = _rk4_path(s.f0, sign * s.fp0, cc, forced, grid.h, k, clip, buf)
        buf[reached + 1:] = 0.0
        out[side] = buf
    out[0] = out[-1] = 0.0
    return out


# ---------------------------------------------------------------- finite differences

def fd_residual(f: np.ndarray, p: np.ndarray, h: float) -> np.ndarray:
    """Interior residual of f'' - f^2 + phi with the centered second difference."""
    return (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h) - f[1:-1] ** 2 + p[1:-1]


def _tridiag_solve(sub, diag, sup, rhs):
    _, _, _, x, info = lapack.dgtsv(sub.copy(), diag.copy(), sup.copy(), rhs.copy())
    if info != 0:
        raise NoConvergence("singular Jacobian in finite-difference Newton")
    return x


def fd_newton(f: np.ndarray, p: np.ndarray, h: float, tol: float = TOL_EQ,
              max_iter: int = 60, blowup: float = 1e3) -> np.ndarray:
    """Damped Newton for the Dirichlet finite-difference problem."""
    f = np.array(f, dtype=float)
    f[0] = f[-1] = 0.0
    off = np.full(f.size - 3, 1.0 / (h * h))
    r = fd_residual(f, p, h)
    for _ in range(max_iter):
        if np.abs(r).max() <= tol:
            return f
        d = _tridiag_solve(off, -2.0 / (h * h) - 2.0 * f[1:-1], off, -r)
        merit = np.linalg.norm(r)
        lam = 1.0
        all_blew = True
        for _ in range(MAX_HALVINGS + 1):
            trial = f.copy()
            trial[1:-1] += lam * d
            if np.all(np.isfinite(trial)) and np.abs(trial).max() < blowup:
                all_blew = False
                rt = fd_residual(trial, p, h)
                if np.linalg.norm(rt) < merit:
                    f, r = trial, rt
                    break
            lam *= 0.5
        else:
            if all_blew:
                raise Diverged("every damped finite-difference step ran away")
            raise NoConvergence("finite-difference Newton stalled")
    if np.abs(r).max() <= tol:
        return f
    raise NoConvergence(f"finite-difference Newton: residual {np.abs(r).max():.3e} after {max_iter} steps")


def fd_pseudo_transient(f: np.ndarray, p: np.ndarray, h: float, tol: float = TOL_EQ,
                        dt0: float = 0.1, max_iter: int = 400, blowup: float = 1e3) -> np.ndarray:
    """Implicit-Euler steps of f_t = f'' - f^2 + phi with the step grown as the residual
    falls (switched evolution relaxation); reaches stable states Newton may miss."""
    f = np.array(f, dtype=float)
    f[0] = f[-1] = 0.0
    off = np.full(f.size - 3, 1.0 / (h * h))
    r = fd_residual(f, p, h)
    dt = dt0
    for _ in range(max_iter):
        nr = np.linalg.norm(r)
        if np.abs(r).max() <= tol:
            return f
        d = _tridiag_solve(off, -2.0 / (h * h) - 2.0 * f[1:-1] - 1.0 / dt, off, -r)
        f = f.copy()
        f[1:-1] += d
        if not np.all(np.isfinite(f)) or np.abs(f).max() > blowup:
            raise Diverged("pseudo-transient iteration ran away")
        r = fd_residual(f, p, h)
        dt = min(dt * nr / max(np.linalg.norm(r), 1e-300), 1e12)
    raise NoConvergence(f"pseudo-transient: residual {np.abs(r).max():.3e} after {max_iter} steps")


def state_from_profile(f: np.ndarray, grid: Grid, c) -> ShootState:
    i = grid.mid
    return ShootState(float(f[i]), float((f[i + 1] - f[i - 1]) / (2.0 * grid.h)), c)


# ---------------------------------------------------------------- shooting Newton

def shoot_newton(s: ShootState, grid: Grid, tol: float = TOL_SHOOT, max_iter: int = 30) -> ShootState:
    miss = shoot_residual(s, grid)
    for _ in range(max_iter):
        if not miss.diverged and miss.size <= tol:
            return s
        z = np.array([s.f0, s.fp0])
        F = np.array([miss.right, miss.left])
        J = np.empty((2, 2))
        for j in range(2):
            dz = np.zeros(2)
            dz[j] = 1e-7 * max(1.0, abs(z[j]))
            a = shoot_residual(ShootState(*(z + dz), s.c), grid)
            b = shoot_residual(ShootState(*(z - dz), s.c), grid)
            if a.diverged or b.diverged:
                raise Diverged("shooting Jacobian probe ran away")
            J[:, j] = (np.array(list(a)) - np.array(list(b))) / (2.0 * dz[j])
        try:
            d = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular shooting Jacobian") from exc
        lam = 1.0
        all_blew = True
        for _ in range(MAX_HALVINGS + 1):
            trial = ShootState(*(z + lam * d), s.c)
            m = shoot_residual(trial, grid)
            if not m.diverged:
                all_blew = False
                if miss.diverged or m.size < miss.size:
                    s, miss = trial, m
                    break
            lam *= 0.5
        else:
            if all_blew:
                raise Diverged("every damped shooting step ran away")
            raise NoConvergence("shooting Newton stalled")
    if not miss.diverged and miss.size <= tol:
        return s
    raise NoConvergence(f"shooting miss {miss.size:.3e} after {max_iter} steps")


# ---------------------------------------------------------------- equilibria

@dataclass(frozen=True, eq=False)
class Equilibrium:
    shoot: ShootState
    profile: GridFunction = field(repr=False)
    residual: float
    unstable_dim: int
    label: str
    eigenvalues: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    tail_min: float = 0.0
    admissible: bool = True

    @property
    def c(self):
        return self.shoot.c

    @property
    def color(self) -> str:
        return COLORS.get(self.unstable_dim, f"dim{self.unstable_dim}")

    def row(self) -> dict:
        return {"c": self.c, "f0": self.shoot.f0, "fp0": self.shoot.fp0,
                "residual": self.residual, "unstable_dim": self.unstable_dim}


def tail_minimum(f: np.ndarray, grid: Grid, start: float = TAIL_START) -> float:
    mask = np.abs(grid.x) >= start
    mask[0] = mask[-1] = False
    return float(f[mask].min()) if mask.any() else 0.0


def make_label(s: ShootState) -> str:
    c = "none" if s.c is None else f"{s.c:.6g}"
    return f"c={c}:f0={s.f0:.6f}:fp0={s.fp0:.6f}"


def build_equilibrium(f: np.ndarray, s: ShootState, grid: Grid, label: str | None = None,
                      n_eig: int = 3) -> Equilibrium:
    p = forcing_values(grid.x, s.c)
    res = float(np.abs(fd_residual(f, p, grid.h)).max())
    prof = GridFunction(grid, f)
    m = assemble_h(prof)
    dim = m.count_above(0.0)
    ev = eigenvalues_top(m, max(n_eig, dim + 1))
    tm = tail_minimum(f, grid)
    return Equilibrium(s, prof, res, dim, label or make_label(s), ev, tm, tm >= TAIL_FLOOR)


def solve_equilibrium(guess: ShootState, grid: Grid, tol_shoot: float = TOL_SHOOT,
                      tol_eq: float = TOL_EQ, max_iter: int = 60) -> Equilibrium:
    """Steady state near ``guess``; see the module docstring for the passes.

    Seeds are tried in order (the shot, then a Gaussian through f(0)), first by
    Newton and then by pseudo-transient relaxation; the first admissible
    result wins, else the first result of any kind.
    """
    p = forcing_values(grid.x, guess.c)
    bump = guess.f0 * np.exp(-0.5 * grid.x ** 2)
    fallback, last = None, None
    for solver in (lambda s: fd_newton(s, p, grid.h, tol_eq, max_iter),
                   lambda s: fd_pseudo_transient(s, p, grid.h, tol_eq)):
        for seed in (shot_profile(guess, grid), bump):
            try:
                e = _refine(solver(seed), grid, guess.c, tol_shoot)
            except (NoConvergence, Diverged) as exc:
                last = exc
                continue
            if e.admissible:
                return e
            fallback = fallback or e
    if fallback is not None:
        return fallback
    raise last


def _refine(f: np.ndarray, grid: Grid, c, tol_shoot: float = TOL_SHOOT) -> Equilibrium:
    s0 = state_from_profile(f, grid, c)
    s = shoot_newton(s0, grid, tol_shoot)
    if s.distance(s0) > STATE_MATCH:
        raise NoConvergence(f"shooting settled at ({s.f0:.6g}, {s.fp0:.6g}), "
                            f"away from the profile state ({s0.f0:.6g}, {s0.fp0:.6g})")
    return build_equilibrium(f, s, grid)


def default_seeds(c, lo: float = -3.0, hi: float = 3.0, count: int = 31) -> list[ShootState]:
    v = np.linspace(lo, hi, count)
    return [ShootState(float(a), float(b), c) for a in v for b in v]


# ---------------------------------------------------------------- diagram scan

@dataclass
class DiagramScan:
    equilibria: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.equilibria)

    def __len__(self):
        return len(self.equilibria)

    def __getitem__(self, i):
        return self.equilibria[i]

    def at(self, c) -> list:
        return [e for e in self.equilibria if e.c == c]


def _dedup(eqs: list, tol: float) -> list:
    out: list[Equilibrium] = []
    for e in sorted(eqs, key=lambda q: q.residual):
        if not any(e.shoot.distance(o.shoot) < tol for o in out):
            out.append(e)
    return sorted(out, key=lambda q: (q.shoot.f0, q.shoot.fp0))


def _solve_fd_only(seed: ShootState, grid: Grid, p: np.ndarray, tol_eq: float):
    try:
        f = fd_newton(shot_profile(seed, grid), p, grid.h, tol_eq)
    except (NoConvergence, Diverged) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return f, None


def scan_one_c(c, seeds, grid: Grid, dedup_tol: float = DEDUP_TOL,
               tol_eq: float = TOL_EQ, tol_shoot: float = TOL_SHOOT) -> DiagramScan:
    """All distinct steady states reached from ``seeds`` at a single c."""
    p = forcing_values(grid.x, c)
    profiles = []
    scan = DiagramScan()
    for seed in seeds:
        seed = ShootState(seed.f0, seed.fp0, c)
        f, err = _solve_fd_only(seed, grid, p, tol_eq)
        if f is None:
            scan.failures.append((seed, err))
            continue
        s = state_from_profile(f, grid, c)
        if not any(s.distance(q) < dedup_tol for q, _ in profiles):
            profiles.append((s, f))
    found = []
    for s0, f in profiles:
        try:
            found.append(_refine(f, grid, c, tol_shoot))
        except (NoConvergence, Diverged) as exc:
            scan.failures.append((s0, f"refine {type(exc).__name__}: {exc}"))
    good = [e for e in found if e.admissible]
    scan.equilibria = _dedup(good, dedup_tol)
    scan.artifacts = _dedup([e for e in found if not e.admissible], dedup_tol)
    return scan


def scan_diagram(c_values, seed_grid, grid: Grid, dedup_tol: float = DEDUP_TOL,
                 workers: int = 1, tol_eq: float = TOL_EQ, tol_shoot: float = TOL_SHOOT) -> DiagramScan:
    """Solve from every seed at every c; ``seed_grid`` is a list of states (their c is ignored)
    or a callable c -> list of states."""
    c_values = list(c_values)
    seeds_for = seed_grid if callable(seed_grid) else (lambda c: seed_grid)
    if workers > 1 and len(c_values) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            k = len(c_values)
            parts = list(ex.map(scan_one_c, c_values, [list(seeds_for(c)) for c in c_values],
                                [grid] * k, [dedup_tol] * k, [tol_eq] * k, [tol_shoot] * k))
    else:
        parts = [scan_one_c(c, seeds_for(c), grid, dedup_tol, tol_eq, tol_shoot) for c in c_values]
    out = DiagramScan()
    for part in parts:
        out.equilibria += part.equilibria
        out.artifacts += part.artifacts
        out.failures += part.failures
    return out


# ---------------------------------------------------------------- continuation

@dataclass(frozen=True)
class BranchEvent:
    branch_id: str
    c_event: float
    kind: str
    c_bracket: tuple = ()
    detail: str = ""

    def to_json(self) -> dict:
        return {"branch_id": self.branch_id, "c_event": self.c_event, "kind": self.kind}


@dataclass
class Branch:
    branch_id: str
    points: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def c_values(self) -> np.ndarray:
        return np.array([p.c for p in self.points])


class _Continuer:
    """Pseudo-arclength in (interior profile, c) with inner product h*<u,v> + c*c'."""

    def __init__(self, grid: Grid, tol: float = TOL_EQ):
        self.g = grid
        self.h = grid.h
        self.m = grid.n - 2
        self.tol = tol
        self.dphi_dc = -np.exp(-0.5 * grid.x[1:-1] ** 2)
        self.w = np.full(self.m + 1, self.h)
        self.w[-1] = 1.0
        off = np.full(self.m - 1, 1.0 / self.h ** 2)
        self.lap = sp.diags([off, np.full(self.m, -2.0 / self.h ** 2), off], [-1, 0, 1], format="csc")

    def full(self, z):
        f = np.zeros(self.g.n)
        f[1:-1] = z[:-1]
        return f

    def F(self, z):
        f = self.full(z)
        return fd_residual(f, forcing_values(self.g.x, z[-1]), self.h)

    def bordered(self, z, t):
        J = self.lap - sp.diags(2.0 * z[:-1])
        wt = (self.w * t)[None, :]
        return sp.bmat([[J, sp.csc_matrix(self.dphi_dc[:, None])],
                        [sp.csc_matrix(wt[:, :-1]), sp.csc_matrix(wt[:, -1:])]], format="csc")

    def tangent(self, z, t_prev):
        rhs = np.zeros(self.m + 1)
        rhs[-1] = 1.0
        t = spsolve(self.bordered(z, t_prev), rhs)
        t /= math.sqrt(np.sum(self.w * t * t))
        return t if np.sum(self.w * t * t_prev) >= 0 else -t

    def correct(self, z_pred, t, z_base, s, max_iter: int = 10):
        """Newton on F=0 plus the arclength condition <t, z - z_base> = s."""
        z = z_pred.copy()
        for it in range(max_iter):
            G = np.concatenate([self.F(z), [np.sum(self.w * t * (z - z_base)) - s]])
            if np.abs(G).max() <= self.tol:
                return z, it
            z = z + spsolve(self.bordered(z, t), -G)
            if not np.all(np.isfinite(z)) or np.abs(z[:-1]).max() > 1e3:
                return None, it
        G = np.concatenate([self.F(z), [np.sum(self.w * t * (z - z_base)) - s]])
        return (z, max_iter) if np.abs(G).max() <= self.tol else (None, max_iter)


def _indicators(eq: Equilibrium, tangent_c: float):
    return {"dim": eq.unstable_dim, "admissible": eq.admissible, "dc": np.sign(tangent_c)}


def continue_branch(start: Equilibrium, c_range, step: float = 1e-3, *,
                    branch_id: str | None = None, direction: int | None = None,
                    min_step: float = 1e-7, max_points: int = 20000,
                    refine_events: bool = True, stop_on_inadmissible: bool = True) -> Branch:
    """Follow the steady state ``start`` through c, recording points and events.

    Events: ``fold`` (c turns around and the Jacobian determinant changes
    sign), ``branch_point`` (determinant sign change without a turn),
    ``dim_change`` (even jump in unstable dimension) and ``admissibility``
    (the far tail turns negative or back).  Event c is bisected in arclength
    to width ``EVENT_C_WIDTH``.  With ``stop_on_inadmissible`` the run ends at
    the first loss of admissibility: past it the branch is a truncation artifact.
    """
    c_lo, c_hi = sorted(map(float, c_range))
    grid = start.profile.grid
    if start.c is None:
        return _constant_branch(start, c_lo, c_hi, step, branch_id)
    if not (c_lo - 1e-12 <= start.c <= c_hi + 1e-12):
        raise ValueError(f"start c={start.c} lies outside [{c_lo}, {c_hi}]")
    if direction is None:
        direction = 1 if abs(start.c - c_lo) <= abs(start.c - c_hi) else -1
    cont = _Continuer(grid)
    bid = branch_id or start.label
    br = Branch(bid, [start])
    z = np.concatenate([start.profile.values[1:-1], [start.c]])
    t0 = np.zeros(cont.m + 1)
    t0[-1] = float(direction)
    t = cont.tangent(z, t0)
    if t[-1] * direction < 0:
        t = -t
    ind = _indicators(start, t[-1])
    ds = step
    prev_eq = start
    while len(br.points) < max_points:
        z_new, its = cont.correct(z + ds * t, t, z, ds)
        if z_new is None:
            ds *= 0.5
            if ds < min_step:
                raise StepCollapse(f"continuation step fell below {min_step:g} near c={z[-1]:.6g}",
                                   last_point=prev_eq)
            continue
        t_new = cont.tangent(z_new, t)
        f = cont.full(z_new)
        eq = build_equilibrium(f, state_from_profile(f, grid, float(z_new[-1])), grid)
        ind_new = _indicators(eq, t_new[-1])
        for kind in _event_kinds(ind, ind_new):
            br.events.append(_locate(cont, z, t, ds, kind, ind, bid, refine_events,
                                     (prev_eq.c, eq.c)))
        br.points.append(eq)
        z, t, ind, prev_eq = z_new, t_new, ind_new, eq
        if its <= 3:
            ds = min(step, ds * 1.5)
        if not (c_lo <= z[-1] <= c_hi):
            break
        if stop_on_inadmissible and not eq.admissible:
            break
    return br


def _event_kinds(a, b):
    kinds = []
    if a["dim"] != b["dim"]:
        if (a["dim"] - b["dim"]) % 2:
            kinds.append("fold" if a["dc"] != b["dc"] else "branch_point")
        else:
            kinds.append("dim_change")
    if a["admissible"] != b["admissible"]:
        kinds.append("admissibility")
    return kinds


def _locate(cont: _Continuer, z, t, ds, kind, ind0, bid, refine, c_pair):
    """Bisect the arclength on [0, ds] from z for the first change of the event's indicator."""
    def state(s):
        z_s, _ = cont.correct(z + s * t, t, z, s, max_iter=15)
        if z_s is None:
            return None, None
        f = cont.full(z_s)
        e = build_equilibrium(f, state_from_profile(f, cont.g, float(z_s[-1])), cont.g, n_eig=1)
        return z_s, e

    def same(e):
        if kind == "admissibility":
            return e.admissible == ind0["admissible"]
        return e.unstable_dim == ind0["dim"]

    lo, hi = 0.0, ds
    c_a, c_b = c_pair
    if refine:
        for _ in range(60):
            if abs(c_b - c_a) <= EVENT_C_WIDTH:
                break
            mid = 0.5 * (lo + hi)
            z_m, e = state(mid)
            if e is None:
                break
            if same(e):
                lo, c_a = mid, e.c
            else:
                hi, c_b = mid, e.c
    return BranchEvent(bid, 0.5 * (c_a + c_b), kind, (min(c_a, c_b), max(c_a, c_b)))


def _constant_branch(start, c_lo, c_hi, step, branch_id):
    # unforced problem: nothing depends on c
    br = Branch(branch_id or start.label, [start])
    for c in np.arange(c_lo, c_hi + 0.5 * step, step):
        br.points.append(replace(start, label=f"{start.label}@{c:.6g}"))
    return br


def switch_branch(branch: Branch, event: BranchEvent, offset: float = 5e-3,
                  amplitudes=(0.05, 0.1, 0.2), tol_eq: float = TOL_EQ) -> list:
    """Steady states on the branches crossing ``branch`` at a branch point.

    On each side of the event, the branch point nearest ``c_event +- offset``
    is pushed along the eigenvector whose eigenvalue passes through zero and
    re-solved.  Admissible results away from ``branch`` are returned.
    """
    found: list[Equilibrium] = []
    for side in (1, -1):
        target = event.c_event + side * offset
        p = min(branch.points, key=lambda q: abs(q.c - target))
        if (p.c - event.c_event) * side <= 0:
            continue
        m = assemble_h(p.profile)
        lam = eigenvalues_top(m, 4)
        try:
            v = eigenfunction(m, lam[int(np.argmin(np.abs(lam)))]).values
        except NotIsolated:
            continue
        grid = p.profile.grid
        rhs = forcing_values(grid.x, p.c)
        for a in amplitudes:
            for s in (1, -1):
                try:
                    e = _refine(fd_newton(p.profile.values + s * a * v, rhs, grid.h, tol_eq), grid, p.c)
                except (NoConvergence, Diverged):
                    continue
                if not e.admissible or e.shoot.distance(p.shoot) < STATE_MATCH:
                    continue
                if all(e.shoot.distance(q.shoot) >= DEDUP_TOL for q in found):
                    found.append(e)
    return found


def merge_events(branches, tol: float) -> list:
    """Distinct events over several branches (same kind within ``tol`` in c counts once)."""
    out: list[BranchEvent] = []
    for ev in sorted((e for b in branches for e in b.events), key=lambda e: e.c_event):
        if not any(o.kind == ev.kind and abs(o.c_event - ev.c_event) <= tol for o in out):
            out.append(ev)
    return out


def write_diagram_csv(path, equilibria) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "f0", "fp0", "residual", "unstable_dim"])
        for e in equilibria:
            w.writerow([f"{e.c:.17g}", f"{e.shoot.f0:.17g}", f"{e.shoot.fp0:.17g}",
                        f"{e.residual:.17g}", e.unstable_dim])


def write_events_json(path, events) -> None:
    with open(path, "w") as fh:
        json.dump([e.to_json() for e in events], fh, indent=2)
