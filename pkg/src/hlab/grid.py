"""Uniform grids on the truncated line [-X, X], sampled functions and norms.

All truncated problems in the package use homogeneous Dirichlet data at
``x = -X`` and ``x = +X``; the end nodes of every profile are therefore 0.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_X = 20.0
DEFAULT_N = 801
DEFAULT_ALPHA = 0.5

# Above this many nodes the Hölder seminorm is estimated from dyadic offsets.
EXHAUSTIVE_HOLDER_MAX_N = 2000


@dataclass(frozen=True)
class Grid:
    X: float
    n: int

    def __post_init__(self):
        if not self.X > 0:
            raise ValueError(f"half width must be positive, got {self.X}")
        if self.n < 3:
            raise ValueError(f"need at least 3 points, got {self.n}")
        if self.n % 2 == 0:
            raise ValueError(f"point count must be odd so that x=0 is a node, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.X / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(-self.X, self.X, self.n)
        m = self.n // 2
        x[m] = 0.0
        x[m + 1:] = -x[m - 1::-1]
        x.flags.writeable = False
        return x

    @property
    def mid(self) -> int:
        return self.n // 2

    @property
    def interior(self) -> slice:
        return slice(1, self.n - 1)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n))

    def function(self, values) -> "GridFunction":
        return GridFunction(self, values)


def make_grid(X: float = DEFAULT_X, n: int = DEFAULT_N) -> Grid:
    return Grid(float(X), int(n))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples of a profile on ``grid``; read-only once built."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _values(other))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _values(other))

    def __mul__(self, s):
        return GridFunction(self.grid, self.values * s)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def at_zero(self) -> float:
        return float(self.values[self.grid.mid])

    def to_csv(self, path) -> None:
        write_profile_csv(path, self.grid.x, self.values)

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        x, v = read_profile_csv(path)
        grid = make_grid(x[-1], len(x))
        if not np.allclose(grid.x, x, rtol=0, atol=1e-12 * grid.X):
            raise ValueError(f"{path}: nodes are not a uniform symmetric grid")
        return cls(grid, v)


def _values(u):
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


def write_profile_csv(path, x, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for xi, vi in zip(x, values):
            w.writerow([f"{xi:.17g}", f"{vi:.17g}"])


def read_profile_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x", "value"]:
        raise ValueError(f"{path}: expected header 'x,value'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


def forcing_values(x: np.ndarray, c: float | None) -> np.ndarray:
    """(x^2 - c) exp(-x^2/2); ``c=None`` stands for the unforced problem."""
    if c is None:
        return np.zeros_like(x, dtype=float)
    return (x * x - c) * np.exp(-0.5 * x * x)


def sample_forcing(grid: Grid, c: float | None) -> GridFunction:
    return GridFunction(grid, forcing_values(grid.x, c))


def sup_norm(u) -> float:
    v = _values(u)
    return float(np.max(np.abs(v))) if v.size else 0.0


def _check_alpha(alpha: float) -> float:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"Hölder exponent must lie in (0, 1], got {alpha}")
    return float(alpha)


def _offsets(n: int, exhaustive: bool | None) -> np.ndarray:
    if exhaustive is None:
        exhaustive = n <= EXHAUSTIVE_HOLDER_MAX_N
    if exhaustive:
        return np.arange(1, n)
    return 2 ** np.arange(int(np.log2(n - 1)) + 1)


def holder_seminorm(values: np.ndarray, x: np.ndarray, alpha: float = DEFAULT_ALPHA,
                    exhaustive: bool | None = None) -> np.ndarray | float:
    """max over node pairs of |u_i - u_j| / |x_i - x_j|^alpha.

    ``values`` may be 1-D or a stack of profiles (frames along axis 0); the
    seminorm is taken along the last axis.  Offsets are visited in increasing
    order and a profile drops out once its oscillation over the current
    distance can no longer beat its running maximum, which leaves the result
    unchanged.
    """
    alpha = _check_alpha(alpha)
    v = np.asarray(values, dtype=float)
    flat = v.reshape(-1, v.shape[-1])
    best = np.zeros(flat.shape[0])
    if flat.shape[1] < 2:
        return float(best[0]) if v.ndim == 1 else best.reshape(v.shape[:-1])
    osc = flat.max(axis=1) - flat.min(axis=1)
    rows = np.arange(flat.shape[0])
    for d in _offsets(flat.shape[1], exhaustive):
        dist = np.abs(x[d:] - x[:-d]) ** alpha
        rows = rows[osc[rows] / dist.min() > best[rows]]
        if rows.size == 0:
            break
        sub = flat[rows]
        q = np.max(np.abs(sub[:, d:] - sub[:, :-d]) / dist, axis=1)
        best[rows] = np.maximum(best[rows], q)
    return float(best[0]) if v.ndim == 1 else best.reshape(v.shape[:-1])


def holder_norm(u, alpha: float = DEFAULT_ALPHA, exhaustive: bool | None = None) -> float:
    """Discrete C^{0,alpha} norm: sup norm plus the pairwise Hölder seminorm."""
    v = _values(u)
    x = u.grid.x if isinstance(u, GridFunction) else np.arange(v.size, dtype=float)
    return sup_norm(v) + holder_seminorm(v, x, alpha, exhaustive)


def check_decay_rate(a: float, reference_eigenvalue: float | None = None) -> float:
    if not a > 0:
        raise ValueError(f"decay rate must be positive, got {a}")
    if reference_eigenvalue is not None and not a < reference_eigenvalue:
        raise ValueError(
            f"decay rate {a} must be smaller than the reference eigenvalue {reference_eigenvalue}")
    return float(a)


def frame_norms(field_like, alpha: float = DEFAULT_ALPHA, exhaustive: bool | None = None) -> np.ndarray:
    """Hölder norm of every frame of a trajectory-like object."""
    v = np.asarray(field_like.values, dtype=float)
    x = field_like.grid.x
    return np.max(np.abs(v), axis=-1) + holder_seminorm(v, x, alpha, exhaustive)


def weighted_decay_norm(field_like, a: float, alpha: float = DEFAULT_ALPHA,
                        with_time_derivative: bool = False,
                        exhaustive: bool | None = None) -> float:
    """Backward-decay norm  max_t exp(-a t) ||u(t)||_{C^{0,alpha}}  over frames t <= 0.

    ``field_like`` is anything with ``grid``, ``times`` and ``values``
    (frames stacked along axis 0).  With ``with_time_derivative`` the
    C^1-in-time part is added, the derivative of the weighted norm curve being
    taken by finite differences of frames.
    """
    a = check_decay_rate(a)
    t = np.asarray(field_like.times, dtype=float)
    if np.any(t > 1e-12):
        raise ValueError("weighted decay norm is defined for frames at t <= 0")
    g = np.exp(-a * t) * frame_norms(field_like, alpha, exhaustive)
    total = float(np.max(g)) if g.size else 0.0
    if with_time_derivative and g.size >= 3:
        total += float(np.max(np.abs(np.gradient(g, t, edge_order=2))))
    return total
