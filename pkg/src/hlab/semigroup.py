"""The linearized operator L = d/dt - H at a frozen steady state, its kernel and
the backward-convolution inverse

    Gamma(w)(t) = int_t^0 exp(-H (tau - t)) w(tau) dtau,      t <= 0,

realized in the eigenbasis of the discrete H.  With this sign convention
L Gamma w = -w and Gamma(w)(0) = 0.

exp(-H s) for s > 0 amplifies every negative mode by exp(|lambda| s), so the
propagator only acts on the modes actually present in its input: coefficients
below ``BAND_RTOL`` of the largest are dropped, and a retained mode whose
exponent passes ``EXPONENT_GUARD`` raises ModeOverflow.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ModeOverflow
from .evolution import Trajectory
from .grid import DEFAULT_ALPHA, Grid, GridFunction, check_decay_rate, weighted_decay_norm
from .spectrum import SchroedingerMatrix, assemble_h, unstable_subspace

EXPONENT_GUARD = 500.0
BAND_RTOL = 1e-12
DEFAULT_T = 20.0


@dataclass(eq=False)
class SpaceTimeField:
    grid: Grid
    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size, self.grid.n):
            raise ValueError("frames do not match times and grid")
        if self.times.size and abs(self.times[-1]) > 1e-12:
            raise ValueError("space-time fields end at t = 0")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must increase strictly")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("frames must be finite")

    def __add__(self, other):
        return SpaceTimeField(self.grid, self.times, self.values + other.values)

    def __sub__(self, other):
        return SpaceTimeField(self.grid, self.times, self.values - other.values)

    def __mul__(self, s):
        return SpaceTimeField(self.grid, self.times, self.values * s)

    __rmul__ = __mul__

    def sup(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def to_trajectory(self) -> Trajectory:
        return Trajectory(self.grid, self.times, self.values)

    @classmethod
    def from_function(cls, grid: Grid, times, fn) -> "SpaceTimeField":
        """Frames fn(t) (full-length arrays) at each time."""
        times = np.asarray(times, dtype=float)
        return cls(grid, times, np.array([fn(t) for t in times]))


def time_grid(T: float = DEFAULT_T, dt: float = 0.01) -> np.ndarray:
    n = int(round(T / dt))
    t = np.linspace(-T, 0.0, n + 1)
    t[-1] = 0.0
    return t


class FrozenPropagator:
    """Full eigendecomposition of H at a steady state; exp(-H s) and Gamma in that basis."""

    def __init__(self, f: GridFunction):
        self.f = f
        self.h_matrix: SchroedingerMatrix = assemble_h(f)
        lam, V = eigh_tridiagonal(self.h_matrix.diagonal, self.h_matrix.off_diagonal)
        order = np.argsort(-lam)
        self.eigenvalues = lam[order]
        self.vectors = V[:, order]          # Euclidean-orthonormal columns

    @property
    def grid(self) -> Grid:
        return self.f.grid

    def reconstruction_error(self) -> float:
        H = self.h_matrix.to_dense()
        R = (self.vectors * self.eigenvalues) @ self.vectors.T
        return float(np.abs(H - R).max())

    def orthonormality_error(self) -> float:
        V = self.vectors
        return float(np.abs(V.T @ V - np.eye(V.shape[1])).max())

    def coefficients(self, frames: np.ndarray) -> np.ndarray:
        return np.atleast_2d(frames)[:, 1:-1] @ self.vectors

    def synthesize(self, coef: np.ndarray) -> np.ndarray:
        out = np.zeros((coef.shape[0], self.grid.n))
        out[:, 1:-1] = coef @ self.vectors.T
        return out

    def active_modes(self, coef: np.ndarray) -> np.ndarray:
        scale = np.abs(coef).max() if coef.size else 0.0
        if scale == 0.0:
            return np.zeros(coef.shape[1], dtype=bool)
        return np.abs(coef).max(axis=0) > BAND_RTOL * scale

    def _guard(self, active, span):
        worst = np.max(-self.eigenvalues[active] * span, initial=-np.inf)
        if worst > EXPONENT_GUARD:
            k = int(np.argmax(np.where(active, -self.eigenvalues, -np.inf)))
            raise ModeOverflow(f"mode {k} (lambda={self.eigenvalues[k]:.6g}) would grow by "
                               f"exp({worst:.1f}) over {span:g}")

    def apply(self, v, s: float) -> np.ndarray:
        """exp(-H s) v for a full-length vector v."""
        coef = self.coefficients(np.asarray(v, dtype=float))[0]
        act = self.active_modes(coef[None, :])
        if s > 0:
            self._guard(act, s)
        coef = np.where(act, coef * np.exp(-self.eigenvalues * s), 0.0)
        return self.synthesize(coef[None, :])[0]


def _etd_weights(z):
    """int_0^1 e^{-z s} ds and int_0^1 s e^{-z s} ds, stable for small z."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    em = -np.expm1(-zs)
    a = np.where(small, 1 - z / 2 + z ** 2 / 6 - z ** 3 / 24, em / zs)
    b = np.where(small, 0.5 - z / 3 + z ** 2 / 8 - z ** 3 / 30, (em - zs * np.exp(-zs)) / zs ** 2)
    return a, b


def apply_gamma(w: SpaceTimeField, prop: FrozenPropagator) -> SpaceTimeField:
    """Gamma(w) by exact-exponential trapezoid quadrature per mode (w linear between frames)."""
    t = w.times
    coef = prop.coefficients(w.values)
    act = prop.active_modes(coef)
    if t.size > 1:
        prop._guard(act, t[-1] - t[0])
    lam = prop.eigenvalues[act]
    c = coef[:, act]
    out = np.zeros_like(c)
    for j in range(t.size - 2, -1, -1):
        d = t[j + 1] - t[j]
        z = lam * d
        a, b = _etd_weights(z)
        out[j] = np.exp(-z) * out[j + 1] + d * ((a - b) * c[j] + b * c[j + 1])
    full = np.zeros_like(coef)
    full[:, act] = out
    vals = prop.synthesize(full)
    vals[-1] = 0.0
    return SpaceTimeField(w.grid, t, vals)


def apply_l(u: SpaceTimeField, f: GridFunction) -> SpaceTimeField:
    """u_t - H u: centered differences in t (second-order one-sided at the ends)."""
    if u.times.size < 3:
        raise ValueError("need at least 3 frames")
    ut = np.gradient(u.values, u.times, axis=0, edge_order=2)
    m = assemble_h(f)
    hu = np.zeros_like(u.values)
    inner = u.values[:, 1:-1]
    hu[:, 1:-1] = m.diagonal * inner
    hu[:, 1:-2] += m.off_diagonal * inner[:, 1:]
    hu[:, 2:-1] += m.off_diagonal * inner[:, :-1]
    out = ut - hu
    out[:, 0] = out[:, -1] = 0.0
    return SpaceTimeField(u.grid, u.times, out)


apply_L = apply_l


def kernel_basis(f: GridFunction, a: float | None = None, T: float = DEFAULT_T,
                 dt: float = 0.01) -> list:
    """One field exp(lambda t) v per positive eigenpair of H (v sup-normalized)."""
    sub = unstable_subspace(f)
    if a is not None and sub.dimension:
        check_decay_rate(a, float(sub.eigenvalues.min()))
    t = time_grid(T, dt)
    return [SpaceTimeField(f.grid, t, np.exp(lam * t)[:, None] * v.values[None, :])
            for lam, v in zip(sub.eigenvalues, sub.basis)]


def kernel_residual_bound(lam: float, dt: float) -> float:
    # leading error of the one-sided end difference is lam^3 dt^2 / 3
    return 1e-6 + abs(lam) ** 3 * dt * dt


def relative_l_residual(k: SpaceTimeField, f: GridFunction) -> float:
    return apply_l(k, f).sup() / k.sup()


def z_norm(u: SpaceTimeField, a: float, alpha: float = DEFAULT_ALPHA) -> float:
    return weighted_decay_norm(u, a, alpha)


@dataclass(frozen=True)
class RightInverseCheck:
    residual: float
    final_value: float


def verify_right_inverse(w: SpaceTimeField, prop: FrozenPropagator, f: GridFunction | None = None,
                         a: float = 0.01) -> RightInverseCheck:
    """Relative Z-norm size of L Gamma w + w, and |Gamma w (0)|."""
    f = f or prop.f
    zw = z_norm(w, a)
    v = apply_gamma(w, prop)
    if zw == 0.0:
        return RightInverseCheck(0.0, float(np.abs(v.values[-1]).max()))
    r = apply_l(v, f) + w
    return RightInverseCheck(z_norm(r, a) / zw, float(np.abs(v.values[-1]).max()))


def right_inverse_order(make_w, prop: FrozenPropagator, T: float = DEFAULT_T,
                        dts=(0.02, 0.01, 0.005), a: float = 0.01) -> dict:
    """Residual at each dt and the fitted order of decrease; ``make_w(times)`` builds w."""
    res = [verify_right_inverse(make_w(time_grid(T, dt)), prop, a=a).residual for dt in dts]
    order = float(np.polyfit(np.log(dts), np.log(res), 1)[0]) if len(dts) > 1 else float("nan")
    return {"dts": list(dts), "residuals": res, "order_estimate": order}


def bounded_image_check(w: SpaceTimeField, prop: FrozenPropagator, a: float) -> float:
    """|Gamma w|_Z / |w|_Z (0 for w = 0)."""
    a = check_decay_rate(a)
    zw = z_norm(w, a)
    if zw == 0.0:
        return 0.0
    return z_norm(apply_gamma(w, prop), a) / zw


def modal_field(prop: FrozenPropagator, times, coef_fns) -> SpaceTimeField:
    """sum_k c_k(t) v_k over the leading modes, v_k the unit eigenvectors of H scaled to sup 1."""
    times = np.asarray(times, dtype=float)
    vals = np.zeros((times.size, prop.grid.n))
    for k, fn in enumerate(coef_fns):
        v = prop.vectors[:, k]
        vals[:, 1:-1] += np.asarray(fn(times))[:, None] * (v / np.abs(v).max())[None, :]
    return SpaceTimeField(prop.grid, times, vals)


def random_smooth_builder(prop: FrozenPropagator, rng: np.random.Generator, modes: int = 4,
                          terms: int = 3, max_freq: float = 1.0):
    """A random band-limited w as a function of the time grid: a few trigonometric
    terms (frequencies up to ``max_freq``) on each of the top ``modes`` modes."""
    params = [(rng.normal(size=terms), rng.uniform(0.0, max_freq, size=terms),
               rng.uniform(0.0, 2 * np.pi, size=terms)) for _ in range(modes)]

    def coef(amp, om, ph):
        return lambda t: np.sum(amp[:, None] * np.cos(om[:, None] * np.asarray(t)[None, :] + ph[:, None]), axis=0)

    fns = [coef(*p) for p in params]
    return lambda times: modal_field(prop, times, fns)
