"""Numerical self-checks behind ``hlab verify``; the report schema is fixed."""
from __future__ import annotations

import numpy as np

from .equilibria import default_seeds, scan_diagram
from .grid import GridFunction, make_grid
from .semigroup import (FrozenPropagator, bounded_image_check, kernel_basis, kernel_residual_bound,
                        random_smooth_builder, relative_l_residual, right_inverse_order, time_grid,
                        verify_right_inverse)
from .spectrum import assemble_h, eigenvalues_above

REPORT_KEYS = ("residual", "order_estimate", "order_residuals", "dts", "K_empirical", "gamma_at_zero", "poschl_teller",
               "kernel_matches", "semigroup_error", "grid")


def poschl_teller(X: float = 20.0, steps=(0.1, 0.05, 0.025)) -> dict:
    """f = -sech^2 gives H = d^2/dx^2 + 2 sech^2 with the single bound state lambda = 1."""
    errs, counts = [], []
    for h in steps:
        grid = make_grid(X, int(round(2 * X / h)) + 1)
        f = GridFunction(grid, -1.0 / np.cosh(grid.x) ** 2)
        lam = eigenvalues_above(assemble_h(f), 0.0)
        counts.append(int(lam.size))
        errs.append(float(abs(lam[0] - 1.0)) if lam.size else float("nan"))
    order = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])
    return {"h": list(steps), "positive_counts": counts, "errors": errs,
            "scaled_errors": [e / h ** 2 for e, h in zip(errs, steps)], "order": order}


def kernel_matches(equilibria, dt: float, T: float) -> list:
    out = []
    for e in equilibria:
        ks = kernel_basis(e.profile, T=T, dt=dt)
        lam = eigenvalues_above(assemble_h(e.profile), 0.0)
        res = [relative_l_residual(k, e.profile) for k in ks]
        bounds = [kernel_residual_bound(v, dt) for v in lam]
        out.append({"c": e.c, "label": e.label, "positive_count": int(lam.size), "kernel_dim": len(ks),
                    "residuals": res, "bounds": bounds,
                    "match": len(ks) == lam.size and all(r <= b for r, b in zip(res, bounds))})
    return out


def semigroup_error(prop: FrozenPropagator, rng, s1: float = -0.3, s2: float = -0.7) -> float:
    """exp(-H (s1+s2)) v against exp(-H s1) exp(-H s2) v, relative, for random v."""
    v = np.zeros(prop.grid.n)
    v[1:-1] = rng.normal(size=prop.grid.n - 2)
    a = prop.apply(v, s1 + s2)
    b = prop.apply(prop.apply(v, s2), s1)
    return float(np.abs(a - b).max() / np.abs(a).max())


def run_checks(cfg, workers: int = 1) -> dict:
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid()
    c_values = cfg.c_values or [-1.2 if cfg.c is None else cfg.c]
    seeds = lambda c: default_seeds(c, cfg.seed_lo, cfg.seed_hi, cfg.seed_count)
    eqs = scan_diagram(c_values, seeds, grid, workers=workers, tol_eq=cfg.tol_eq,
                       tol_shoot=cfg.tol_shoot).equilibria
    if not eqs:
        raise RuntimeError("no steady state found to verify against")
    base = min(eqs, key=lambda e: (e.unstable_dim, abs(e.c - c_values[0])))
    prop = FrozenPropagator(base.profile)
    make_w = random_smooth_builder(prop, rng)
    dts = (2 * cfg.dt, cfg.dt, cfg.dt / 2)
    order = right_inverse_order(make_w, prop, cfg.verify_T, dts, cfg.decay_a)
    w = make_w(time_grid(cfg.verify_T, cfg.dt))
    check = verify_right_inverse(w, prop, a=cfg.decay_a)
    K = max(bounded_image_check(random_smooth_builder(prop, rng)(time_grid(cfg.verify_T, cfg.dt)),
                                prop, cfg.decay_a) for _ in range(4))
    return {"residual": check.residual, "order_estimate": order["order_estimate"],
            "order_residuals": order["residuals"], "dts": order["dts"], "K_empirical": K,
            "gamma_at_zero": check.final_value, "poschl_teller": poschl_teller(cfg.X),
            "kernel_matches": kernel_matches(eqs, cfg.dt, cfg.verify_T),
            "semigroup_error": semigroup_error(prop, rng),
            "grid": {"X": grid.X, "n": grid.n, "base": base.label}}
