"""Discrete Schrödinger operators H = d^2/dx^2 - 2f and their top spectrum.

H is the centered second difference with Dirichlet closure, acting on the
n-2 interior nodes.  Eigenvalues come from Sturm-sequence counts and
bisection, eigenvectors from shifted inverse iteration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import lapack

from .errors import NotIsolated
from .grid import Grid, GridFunction

TOL_BISECT = 1e-11
TOL_EIG = 1e-8
# Two eigenvalues closer than this cannot be separated by inverse iteration.
ISOLATION_RADIUS = 1e-7
# Eigenvalues at or below this are inside the continuum's essential range.
PHYSICAL_CUTOFF = 0.0


@njit(cache=True)
def _count_below(d, e2, sigma):
    # Number of eigenvalues < sigma: negative pivots of the LDL^T of T - sigma I.
    count = 0
    q = d[0] - sigma
    if q < 0.0:
        count += 1
    for i in range(1, d.shape[0]):
        if q == 0.0:
            q = 1e-300
        q = d[i] - sigma - e2[i - 1] / q
        if q < 0.0:
            count += 1
    return count


@njit(cache=True)
def _bisect_top(d, e2, k, lo, hi, tol):
    """The k largest eigenvalues, descending, by bisection on Sturm counts."""
    m = d.shape[0]
    out = np.empty(k)
    upper = hi
    for j in range(k):
        # want the (j+1)-th largest: the smallest s with count_above(s) <= j
        a = lo
        b = upper
        while b - a > tol:
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            if m - _count_below(d, e2, mid) > j:
                a = mid
            else:
                b = mid
        out[j] = 0.5 * (a + b)
        upper = b
    return out


def sturm_count_above(diagonal, off_diagonal, cutoff: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal (d, e) strictly above ``cutoff``."""
    d = np.ascontiguousarray(diagonal, dtype=float)
    e2 = np.ascontiguousarray(off_diagonal, dtype=float) ** 2
    return int(d.size - _count_below(d, e2, np.nextafter(float(cutoff), np.inf)))


def gershgorin_bounds(diagonal, off_diagonal):
    d = np.asarray(diagonal, dtype=float)
    e = np.abs(np.asarray(off_diagonal, dtype=float))
    r = np.zeros_like(d)
    r[:-1] += e
    r[1:] += e
    return float(np.min(d - r)), float(np.max(d + r))


@dataclass(frozen=True, eq=False)
class SchroedingerMatrix:
    grid: Grid
    diagonal: np.ndarray = field(repr=False)
    off_diagonal: np.ndarray = field(repr=False)
    potential_source: str = "f"

    @property
    def size(self) -> int:
        return self.diagonal.size

    def bounds(self):
        return gershgorin_bounds(self.diagonal, self.off_diagonal)

    def shifted(self, s: float) -> "SchroedingerMatrix":
        return SchroedingerMatrix(self.grid, self.diagonal + s, self.off_diagonal,
                                  f"{self.potential_source}{s:+g}")

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Apply H to interior samples (length n-2)."""
        out = self.diagonal * v
        out[:-1] += self.off_diagonal * v[1:]
        out[1:] += self.off_diagonal * v[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        return (np.diag(self.diagonal) + np.diag(self.off_diagonal, 1)
                + np.diag(self.off_diagonal, -1))

    def count_above(self, cutoff: float) -> int:
        return sturm_count_above(self.diagonal, self.off_diagonal, cutoff)


def assemble_h(f: GridFunction, source: str = "f") -> SchroedingerMatrix:
    g = f.grid
    inv_h2 = 1.0 / (g.h * g.h)
    d = -2.0 * inv_h2 - 2.0 * f.values[1:-1]
    e = np.full(g.n - 3, inv_h2)
    return SchroedingerMatrix(g, d, e, source)


def eigenvalues_top(m: SchroedingerMatrix, k: int, tol: float = TOL_BISECT) -> np.ndarray:
    k = min(int(k), m.size)
    if k <= 0:
        return np.zeros(0)
    lo, hi = m.bounds()
    return _bisect_top(m.diagonal, m.off_diagonal ** 2, k, lo - 1.0, hi + 1.0, tol)


def eigenvalues_above(m: SchroedingerMatrix, cutoff: float, tol: float = TOL_BISECT) -> np.ndarray:
    """Every eigenvalue above ``cutoff``, descending; the count is the Sturm count at ``cutoff``."""
    k = m.count_above(cutoff)
    if k == 0:
        return np.zeros(0)
    lo, hi = m.bounds()
    return _bisect_top(m.diagonal, m.off_diagonal ** 2, k, float(cutoff), hi + 1.0, tol)


def fix_sign(v: np.ndarray) -> np.ndarray:
    """Sup-normalize; the largest-magnitude entry (rightmost among near ties) is made positive."""
    a = np.abs(v)
    top = a.max()
    if top == 0.0:
        raise ValueError("cannot normalize the zero vector")
    idx = np.flatnonzero(a >= top * (1.0 - 1e-8))[-1]
    w = v / top
    return -w if w[idx] < 0 else w


def _solve_shifted(m: SchroedingerMatrix, shift: float, rhs: np.ndarray) -> np.ndarray:
    dl = m.off_diagonal.copy()
    du = m.off_diagonal.copy()
    d = m.diagonal - shift
    _, _, _, x, info = lapack.dgtsv(dl, d, du, rhs.copy())
    if info > 0:
        # exactly singular: nudge the shift by one ulp-scale step
        d = m.diagonal - (shift + 1e-13 * max(1.0, abs(shift)))
        _, _, _, x, info = lapack.dgtsv(m.off_diagonal.copy(), d, m.off_diagonal.copy(), rhs.copy())
    return x


def eigenfunction(m: SchroedingerMatrix, lam: float, tol: float = TOL_EIG,
                  radius: float = ISOLATION_RADIUS, max_iter: int = 50) -> GridFunction:
    """Eigenvector for the eigenvalue near ``lam`` (sup-normalized, sign fixed, zero ends)."""
    inside = m.count_above(lam - radius) - m.count_above(lam + radius)
    if inside >= 2:
        raise NotIsolated(f"{inside} eigenvalues within {radius:g} of {lam:.12g}")
    if inside == 0:
        raise NotIsolated(f"no eigenvalue within {radius:g} of {lam:.12g}")
    rng = np.random.default_rng(m.size)
    v = rng.standard_normal(m.size)
    v /= np.abs(v).max()
    res = np.inf
    for _ in range(max_iter):
        w = _solve_shifted(m, lam, v)
        v = w / np.abs(w).max()
        res = np.abs(m.matvec(v) - lam * v).max()
        if res <= tol:
            break
    if res > tol:
        raise NotIsolated(f"inverse iteration at {lam:.12g} stalled with residual {res:.3e}")
    full = np.zeros(m.grid.n)
    full[1:-1] = fix_sign(v)
    return GridFunction(m.grid, full)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    positive_count: int
    potential_source: str = "f"
    eigenfunctions: tuple = ()

    @property
    def min_gap(self) -> float:
        ev = self.eigenvalues
        return float(np.min(ev[:-1] - ev[1:])) if ev.size >= 2 else np.inf

    def physical(self) -> np.ndarray:
        """Mask of eigenvalues that stay discrete on the whole line (above the essential range)."""
        return self.eigenvalues > PHYSICAL_CUTOFF

    def to_json(self) -> dict:
        return {"potential_source": self.potential_source,
                "eigenvalues": [float(v) for v in self.eigenvalues],
                "positive_count": int(self.positive_count)}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


def compute_spectrum(f: GridFunction, k_extra: int = 1, with_vectors: bool = False,
                     source: str = "f") -> Spectrum:
    """Positive eigenvalues plus ``k_extra`` more below zero."""
    m = assemble_h(f, source)
    npos = m.count_above(0.0)
    ev = eigenvalues_top(m, npos + k_extra)
    vecs = tuple(eigenfunction(m, lam) for lam in ev) if with_vectors else ()
    return Spectrum(ev, npos, source, vecs)


def unstable_dim(f: GridFunction) -> int:
    return assemble_h(f).count_above(0.0)


@dataclass(frozen=True)
class UnstableSubspace:
    eigenvalues: np.ndarray
    basis: tuple

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def gram(self, h: float) -> np.ndarray:
        B = np.array([b.values for b in self.basis])
        return h * B @ B.T if len(self.basis) else np.zeros((0, 0))


def unstable_subspace(f: GridFunction) -> UnstableSubspace:
    """Basis of V+, ordered by increasing eigenvalue (e1 has the smallest positive one)."""
    m = assemble_h(f)
    ev = eigenvalues_above(m, 0.0)[::-1].copy()
    return UnstableSubspace(ev, tuple(eigenfunction(m, lam) for lam in ev))
