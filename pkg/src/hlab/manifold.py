"""Experiment drivers: frontier bisection, unstable-manifold fans, spectra along orbits.

Backward orbits out of an equilibrium are stood in for by forward runs
started a small distance along its unstable eigenfunctions.
"""
from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionMismatch, DomainError, NoBracket, NotHeteroclinic,
                     UndeterminedDominant, WindowEmpty)
from .evolution import BlowUp, Converged, StepperConfig, Trajectory, Undetermined, classify, evolve
from .grid import GridFunction
from .spectrum import assemble_h, eigenvalues_top, unstable_subspace

BUMP_WIDTH = 10.0
FAN_WINDOW = (-0.2, 0.2)
MATCH_GUARD = 0.25


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(min(workers, len(items))) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def outcome_key(o) -> tuple:
    if isinstance(o, Converged):
        return ("converged", o.equilibrium_label)
    return (o.kind,)


# ---------------------------------------------------------------- frontier

@dataclass(frozen=True, eq=False)
class FrontierProbe:
    base: object
    A: float
    width: float = BUMP_WIDTH

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("bump width must be positive")

    def initial(self) -> GridFunction:
        x = self.base.profile.grid.x
        return self.base.profile + self.A * np.exp(-x * x / self.width)


@dataclass
class FrontierResult:
    c: float
    A_bracket: tuple
    inside: Trajectory
    outside: Trajectory
    probes: list = field(default_factory=list)

    @property
    def width(self) -> float:
        return abs(self.A_bracket[1] - self.A_bracket[0])

    def to_json(self) -> dict:
        return {"c": self.c, "A_bracket": list(self.A_bracket),
                "witness_runs": ["inside", "outside"],
                "probes": [{"A": a, "outcome": o.to_json()} for a, o in self.probes]}


def _run_probe(args):
    base, A, width, cfg, c, equilibria, record = args
    return evolve(FrontierProbe(base, A, width).initial(), cfg, c, equilibria, record=record)


def frontier_bisect(base, c, cfg: StepperConfig, bracket=(-3.0, -1.0), tol_A: float = 1e-3,
                    width: float = BUMP_WIDTH, equilibria=None) -> FrontierResult:
    """Bisect the amplitude A of f + A exp(-x^2/width) between convergence and blow-up."""
    a, b = map(float, bracket)
    if a == b:
        raise DomainError("frontier bracket has zero width")
    equilibria = list(equilibria) if equilibria else [base]

    def run(A, record=False):
        return _run_probe((base, A, width, cfg, c, equilibria, record))

    probes = []
    (ta, oa), (tb, ob) = run(a, True), run(b, True)
    probes += [(a, oa), (b, ob)]
    if isinstance(oa, Undetermined) or isinstance(ob, Undetermined):
        raise UndeterminedDominant(f"undetermined outcome at the bracket ends ({oa.kind}, {ob.kind}); "
                                   f"raise t_max")
    if outcome_key(oa) == outcome_key(ob):
        raise NoBracket(f"both ends of [{a}, {b}] end as {oa.kind}")
    while abs(b - a) > tol_A:
        m = 0.5 * (a + b)
        tm, om = run(m, True)
        probes.append((m, om))
        if isinstance(om, Undetermined):
            raise UndeterminedDominant(f"A={m:.6g} is undetermined at t_max={cfg.t_max}")
        if outcome_key(om) == outcome_key(oa):
            a, ta, oa = m, tm, om
        else:
            b, tb, ob = m, tm, om
    inside, outside = (ta, tb) if isinstance(oa, Converged) else (tb, ta)
    return FrontierResult(c, (min(a, b), max(a, b)), inside, outside, probes)


# ---------------------------------------------------------------- fan

@dataclass(frozen=True, eq=False)
class FanProbe:
    base: object
    A: float
    theta: float
    e1: GridFunction
    e2: GridFunction

    def initial(self) -> GridFunction:
        return self.base.profile + self.A * (np.cos(self.theta) * self.e1.values
                                             + np.sin(self.theta) * self.e2.values)


@dataclass
class FanResult:
    c: float
    A: float
    thetas: list
    outcomes: list
    brackets: list
    trajectories: dict = field(default_factory=dict)
    base_profile: np.ndarray | None = None
    lambdas: tuple = ()

    def difference_frames(self, theta) -> Trajectory:
        """u(t) - f1 for a recorded run."""
        tr = self.trajectories[theta]
        return Trajectory(tr.grid, tr.times, tr.values - self.base_profile[None, :], tr.c, tr.config,
                          tr.outcome)

    @property
    def theta_star(self):
        return self.brackets[0] if self.brackets else None

    def to_json(self) -> dict:
        return {"c": self.c, "A": self.A,
                "outcomes": [{"theta": t, "outcome": o.to_json()} for t, o in zip(self.thetas, self.outcomes)],
                "theta_bracket": [list(b) for b in self.brackets],
                "witness_runs": [f"theta_{t:.8f}" for t in self.trajectories],
                "window": list(FAN_WINDOW), "eigenvalues": list(self.lambdas)}


def _run_fan(args):
    base, A, theta, e1, e2, cfg, c, equilibria, record = args
    return evolve(FanProbe(base, A, theta, e1, e2).initial(), cfg, c, equilibria, record=record)


def fan_basis(base):
    sub = unstable_subspace(base.profile)
    if sub.dimension != 2:
        raise DimensionMismatch(f"fan needs a 2-dimensional unstable space, base has {sub.dimension}")
    return sub


def fan_classify(base, A: float, thetas, cfg: StepperConfig, c, equilibria=None,
                 bisect_tol: float | None = 1e-6, record: bool = False, workers: int = 1) -> FanResult:
    """Outcomes of f1 + A (e1 cos t + e2 sin t) over ``thetas``; each adjacent pair with
    different outcomes is bisected down to ``bisect_tol`` (None: no bisection)."""
    if base.unstable_dim != 2:
        raise DimensionMismatch(f"fan needs unstable_dim 2, base has {base.unstable_dim}")
    sub = fan_basis(base)
    e1, e2 = sub.basis
    equilibria = list(equilibria) if equilibria else []
    thetas = [float(t) for t in thetas]
    if A == 0:
        warnings.warn("fan amplitude A=0: every probe starts at the base equilibrium", stacklevel=2)
    args = [(base, A, t, e1, e2, cfg, c, equilibria, record) for t in thetas]
    runs = _pmap(_run_fan, args, workers)
    outcomes = [o for _, o in runs]
    trajs = {t: tr for t, (tr, _) in zip(thetas, runs)} if record else {}
    brackets = []
    if bisect_tol is not None:
        for i in range(len(thetas) - 1):
            ka, kb = outcome_key(outcomes[i]), outcome_key(outcomes[i + 1])
            if ka == kb or "undetermined" in (ka[0], kb[0]):
                continue
            lo, hi = thetas[i], thetas[i + 1]
            while abs(hi - lo) > bisect_tol:
                mid = 0.5 * (lo + hi)
                _, om = _run_fan((base, A, mid, e1, e2, cfg, c, equilibria, False))
                km = outcome_key(om)
                if km == ka:
                    lo = mid
                elif km == kb:
                    hi = mid
                else:
                    break
            brackets.append((min(lo, hi), max(lo, hi)))
    return FanResult(float(c), float(A), thetas, outcomes, brackets, trajs,
                     base.profile.values.copy(), tuple(float(v) for v in sub.eigenvalues))


def write_fan_frames(path, diff: Trajectory) -> None:
    """Matrix CSV: header row of x values, then one row per frame time (values of u - f1)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{x:.17g}" for x in diff.grid.x])
        for t, row in zip(diff.times, diff.values):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


# ---------------------------------------------------------------- spectra along orbits

@dataclass
class OrbitSpectrumTrace:
    times: np.ndarray
    curves: np.ndarray            # frames x curves, curve j continuous in t
    positive_counts: np.ndarray
    crossings: list               # (curve_id, t_cross, direction, (t_lo, t_hi))
    ambiguous: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.curves.shape[1]

    def gaps(self, physical_only: bool = False) -> np.ndarray:
        """Per frame, the smallest gap between neighbouring tracked eigenvalues;
        with ``physical_only`` only pairs whose upper member is positive count."""
        s = -np.sort(-self.curves, axis=1)
        g = s[:, :-1] - s[:, 1:]
        if physical_only:
            g = np.where(s[:, :-1] > 0, g, np.inf)
        return g.min(axis=1) if g.shape[1] else np.full(len(self.times), np.inf)

    @property
    def min_gap(self) -> float:
        return float(self.gaps().min())

    @property
    def spectral_flow(self) -> int:
        down = sum(1 for c in self.crossings if c[2] == "down")
        up = sum(1 for c in self.crossings if c[2] == "up")
        return down - up

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"lambda{j + 1}" for j in range(self.k)])
            for t, row in zip(self.times, self.curves):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def _match_frame(prev, new, guard):
    """Nearest-value assignment of ``new`` eigenvalues to previous curve values."""
    k = prev.size
    order = np.empty(k, dtype=int)
    used = set()
    flagged = False
    for j in np.argsort(-prev):
        d = np.abs(new - prev[j])
        cand = np.argsort(d)
        pick = next(i for i in cand if i not in used)
        rest = [i for i in cand if i not in used and i != pick]
        s = np.sort(new)
        local_gap = np.min(np.abs(np.diff(s))) if s.size > 1 else np.inf
        if rest and d[rest[0]] - d[pick] < guard * local_gap:
            flagged = True
        order[j] = pick
        used.add(pick)
    return new[order], flagged


def trace_orbit_spectrum(traj: Trajectory, k: int = 4, guard: float = MATCH_GUARD) -> OrbitSpectrumTrace:
    """Top eigenvalues of H(t) = D - 2u(t) per frame, matched into continuous curves."""
    counts = np.array([assemble_h(traj.frame(i)).count_above(0.0) for i in range(len(traj))])
    kk = max(int(k), int(counts.max()) + 1 if counts.size else int(k))
    raw = [eigenvalues_top(assemble_h(traj.frame(i)), kk) for i in range(len(traj))]
    curves = np.empty((len(traj), kk))
    curves[0] = raw[0]
    ambiguous = []
    for i in range(1, len(traj)):
        curves[i], flagged = _match_frame(curves[i - 1], raw[i], guard)
        if flagged:
            ambiguous.append(float(traj.times[i]))
    crossings = []
    t = traj.times
    for j in range(kk):
        y = curves[:, j]
        for i in range(len(t) - 1):
            if (y[i] > 0) != (y[i + 1] > 0):
                tc = t[i] + (t[i + 1] - t[i]) * y[i] / (y[i] - y[i + 1])
                crossings.append((j, float(tc), "down" if y[i] > 0 else "up", (float(t[i]), float(t[i + 1]))))
    crossings.sort(key=lambda c: c[1])
    return OrbitSpectrumTrace(np.array(t), curves, counts, crossings, ambiguous)


@dataclass(frozen=True)
class SimplicityCertificate:
    certified: bool
    worst_t: float
    worst_gap: float


def certify_simplicity(trace: OrbitSpectrumTrace, gap_tol: float,
                       physical_only: bool = True) -> SimplicityCertificate:
    """Certified iff every tracked gap stays >= gap_tol.  By default only pairs whose
    upper eigenvalue is positive are considered: lower pairs sit inside the continuous
    spectrum of the untruncated operator and pair up as left and right tail modes."""
    g = trace.gaps(physical_only)
    i = int(np.argmin(g))
    return SimplicityCertificate(bool(g[i] >= gap_tol), float(trace.times[i]), float(g[i]))


@dataclass(frozen=True)
class ConnectionReport:
    source_dim: int
    target_dim: int
    spectral_flow: int
    connecting_dim: int
    simplicity_certified: bool
    consistent: bool
    source_label: str = ""
    target_label: str = ""
    worst_gap: float = float("nan")

    def to_json(self) -> dict:
        return dict(self.__dict__)


def connection_report(traj: Trajectory, equilibria, source, trace: OrbitSpectrumTrace | None = None,
                      gap_tol: float = 1e-3) -> ConnectionReport:
    """Dimensions at both ends, spectral flow along the run and the connecting dimension."""
    outcome = traj.outcome if traj.outcome is not None else classify(traj, equilibria)
    if not isinstance(outcome, Converged):
        raise NotHeteroclinic(f"trajectory ended as {outcome.kind}")
    target = next((e for e in equilibria if e.label == outcome.equilibrium_label), None)
    if target is None:
        raise NotHeteroclinic(f"unknown target equilibrium {outcome.equilibrium_label}")
    src = assemble_h(source.profile).count_above(0.0)
    tgt = assemble_h(target.profile).count_above(0.0)
    trace = trace or trace_orbit_spectrum(traj)
    cert = certify_simplicity(trace, gap_tol)
    conn = src - tgt
    return ConnectionReport(src, tgt, trace.spectral_flow, conn, cert.certified,
                            trace.spectral_flow == conn, source.label, target.label, cert.worst_gap)


# ---------------------------------------------------------------- decay rates

@dataclass(frozen=True)
class DecayFit:
    rate: float
    residual: float
    points: int
    t_window: tuple


def estimate_decay_rate(traj: Trajectory, base, window=(1e-3, 0.1), mode: str = "sup",
                        direction: GridFunction | None = None, remainder_tol: float = 0.1) -> DecayFit:
    """Exponential rate at which the run leaves ``base``; equivalently the backward decay rate.

    ``sup``: slope of log |u - f|_inf over the leading stretch of frames whose
    amplitude lies in ``window``.  ``modal``: slope of log |a(t)|, a the L2
    coefficient of u - f on ``direction``, over frames where |a| lies in the
    window and the rest of u - f stays below ``remainder_tol * |a|``.
    """
    lo, hi = window
    w = traj.values - base.profile.values[None, :]
    if mode == "sup":
        amp = np.abs(w).max(axis=1)
        ok = (amp >= lo) & (amp <= hi)
    elif mode == "modal":
        if direction is None:
            raise ValueError("modal fit needs a direction")
        e = direction.values
        a = w @ e / (e @ e)
        amp = np.abs(a)
        rem = np.abs(w - a[:, None] * e[None, :]).max(axis=1)
        ok = (amp >= lo) & (amp <= hi) & (rem <= remainder_tol * amp)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        raise WindowEmpty("no frame inside the amplitude window")
    # leading contiguous stretch only
    stop = idx[0]
    while stop + 1 < ok.size and ok[stop + 1]:
        stop += 1
    sel = np.arange(idx[0], stop + 1)
    if sel.size < 3:
        raise WindowEmpty(f"only {sel.size} frames inside the amplitude window")
    t = traj.times[sel]
    y = np.log(amp[sel])
    coef, res, *_ = np.polyfit(t, y, 1, full=True)
    rms = float(np.sqrt(res[0] / sel.size)) if res.size else 0.0
    return DecayFit(float(coef[0]), rms, int(sel.size), (float(t[0]), float(t[-1])))


def gap_curve(trace: OrbitSpectrumTrace, index: int = 0) -> np.ndarray:
    """Piecewise-linear curve through the midpoints between tracked curves ``index``
    and ``index + 1`` (sorted descending per frame)."""
    s = -np.sort(-trace.curves, axis=1)
    if index + 1 >= s.shape[1]:
        raise ValueError("not enough tracked curves")
    return 0.5 * (s[:, index] + s[:, index + 1])
