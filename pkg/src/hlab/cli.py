"""Command line entry point: ``hlab <subcommand> [--config PATH] [--out DIR] [--workers N] [--strict]``.

Exit codes: 0 success, 2 usage or domain error, 1 internal failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import tempfile
import time
import traceback

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .equilibria import (StepCollapse, continue_branch, default_seeds, merge_events, scan_diagram,
                         switch_branch, write_diagram_csv, write_events_json)
from .errors import DomainError, HlabError
from .evolution import Converged, Trajectory, evolve
from .grid import GridFunction
from .manifold import (FAN_WINDOW, FanProbe, FrontierProbe, connection_report, fan_basis,
                       fan_classify, frontier_bisect, trace_orbit_spectrum, write_fan_frames)

log = logging.getLogger("hlab")

SUBCOMMANDS = ("equilibria", "frontier", "fan", "orbit-spectrum", "evolve", "verify")


class Run:
    """Output directory bookkeeping; the manifest is written last, atomically."""

    def __init__(self, out_dir, subcommand, cfg: RunConfig):
        self.dir = os.path.abspath(out_dir)
        os.makedirs(self.dir, exist_ok=True)
        self.subcommand = subcommand
        self.cfg = cfg
        self.summary = {}
        self.t0 = time.time()

    def path(self, name):
        p = os.path.join(self.dir, name)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)

    def write_text(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text)

    def inventory(self):
        out = []
        for root, _, files in os.walk(self.dir):
            for f in files:
                rel = os.path.relpath(os.path.join(root, f), self.dir)
                if rel != "manifest.json":
                    out.append(rel)
        return sorted(out)

    def finish(self):
        man = {"subcommand": self.subcommand, "version": __version__, "config": self.cfg.echo(),
               "wall_time": time.time() - self.t0, "files": self.inventory(), "summary": self.summary}
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=".manifest", suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(man, fh, indent=2, sort_keys=True, default=str)
        os.replace(tmp, os.path.join(self.dir, "manifest.json"))


def _gnuplot(title, lines):
    return "# gnuplot script\nset datafile separator ','\nset key autotitle columnhead\n" \
           f"set title '{title}'\n" + "\n".join(lines) + "\n"


def _scan(cfg: RunConfig, c_values, workers=1):
    grid = cfg.grid()
    seeds = lambda c: default_seeds(c, cfg.seed_lo, cfg.seed_hi, cfg.seed_count)
    return scan_diagram(c_values, seeds, grid, workers=workers, tol_eq=cfg.tol_eq, tol_shoot=cfg.tol_shoot)


def _covered(e, branches, step):
    for br in branches:
        for p in br.points:
            if (abs(p.c - e.c) <= 1.5 * step
                    and abs(p.profile.at_zero() - e.profile.at_zero()) <= 5e-3
                    and abs(p.shoot.fp0 - e.shoot.fp0) <= 5e-3):
                return True
    return False


# ---------------------------------------------------------------- subcommands

def cmd_equilibria(cfg: RunConfig, run: Run, workers: int):
    if cfg.c_values is not None:
        c_values = cfg.c_values
    else:
        c_values = [-1.2 if cfg.c is None else cfg.c]
    scan = _scan(cfg, c_values, workers)
    write_diagram_csv(run.path("diagram.csv"), scan.equilibria)
    branches, failures = [], []
    use_cont = cfg.continuation == "yes" or (cfg.continuation == "auto" and len(c_values) > 1)
    if use_cont and c_values:
        rng = (min(c_values), max(c_values))
        queue = list(scan.equilibria)
        while queue:
            e = queue.pop(0)
            if _covered(e, branches, cfg.cont_step):
                continue
            for d in (1, -1):
                try:
                    br = continue_branch(e, rng, cfg.cont_step, direction=d,
                                         branch_id=f"{e.label}:{'up' if d > 0 else 'down'}")
                except StepCollapse as exc:
                    failures.append(str(exc))
                    continue
                branches.append(br)
                for ev in br.events:
                    if ev.kind == "branch_point":
                        queue += switch_branch(br, ev, tol_eq=cfg.tol_eq)
    events = merge_events(branches, 2 * cfg.cont_step)
    write_events_json(run.path("events.json"), events)
    if branches:
        with open(run.path("branches.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["branch_id", "c", "f0", "fp0", "unstable_dim"])
            for br in branches:
                for p in br.points:
                    w.writerow([br.branch_id, f"{p.c:.17g}", f"{p.profile.at_zero():.17g}",
                                f"{p.shoot.fp0:.17g}", p.unstable_dim])
    run.write_text("plot.gp", _gnuplot("steady states coded by unstable dimension", [
        "set xlabel 'c'; set ylabel 'f(0)'",
        "plot 'diagram.csv' using 1:2:5 with points palette pt 7"]))
    run.summary.update({"equilibria": len(scan.equilibria), "artifacts": len(scan.artifacts),
                        "dims": [e.unstable_dim for e in scan.equilibria],
                        "events": [[e.kind, e.c_event] for e in events],
                        "continuation_failures": failures})


def _stable_base(cfg: RunConfig, c, workers):
    eqs = _scan(cfg, [c], workers).equilibria
    stable = [e for e in eqs if e.unstable_dim == 0]
    if len(stable) != 1:
        raise DomainError(f"expected one stable steady state at c={c}, found {len(stable)}")
    return stable[0], eqs


def cmd_frontier(cfg: RunConfig, run: Run, workers: int):
    c = -1.2 if cfg.c is None else cfg.c
    base, eqs = _stable_base(cfg, c, workers)
    res = frontier_bisect(base, c, cfg.stepper(), (cfg.A_lo, cfg.A_hi), cfg.tol_A, cfg.bump_width, eqs)
    res.inside.save(run.path("inside"))
    res.outside.save(run.path("outside"))
    run.write_json("frontier.json", res.to_json())
    run.write_text("plot.gp", _gnuplot("frontier witnesses", [
        "plot for [f in system('ls inside/frame_*.csv')] f using 1:2 with lines notitle"]))
    run.summary.update({"A_bracket": list(res.A_bracket), "probes": len(res.probes)})


def cmd_fan(cfg: RunConfig, run: Run, workers: int):
    c = 0.0 if cfg.c is None else cfg.c
    A = 0.1 if cfg.A is None else cfg.A
    eqs = _scan(cfg, [c], workers).equilibria
    tops = [e for e in eqs if e.unstable_dim == 2]
    if not tops:
        raise DomainError(f"no steady state with two unstable directions at c={c}")
    base = tops[0]
    thetas = cfg.thetas or list(np.linspace(0.0, 2 * np.pi, 13)[:-1])
    stepper = cfg.stepper(cfg.fan_t_max)
    res = fan_classify(base, A, thetas, stepper, c, eqs, bisect_tol=cfg.tol_theta, workers=workers)
    kinds = {o.kind for o in res.outcomes}
    if A == 0 or len({(o.kind, getattr(o, "equilibrium_label", "")) for o in res.outcomes}) == 1:
        log.warning("fan outcomes are all %s; no transition in the sweep", kinds)
    e1, e2 = fan_basis(base).basis
    witnesses = {}
    for name, th in ([("below", res.brackets[0][0]), ("above", res.brackets[0][1])] if res.brackets else []):
        tr, _ = evolve(FanProbe(base, A, th, e1, e2).initial(), stepper, c, eqs)
        tr.save(run.path(f"witness_{name}"))
        diff = Trajectory(tr.grid, tr.times, tr.values - base.profile.values[None, :], c)
        write_fan_frames(run.path(f"fan_frames_{name}.csv"), diff)
        witnesses[name] = {"theta": th, "outcome": tr.outcome.to_json()}
    data = res.to_json()
    data["witnesses"] = witnesses
    data["convention"] = "sup-normalized e1, e2; largest-magnitude entry positive"
    run.write_json("fan.json", data)
    run.write_json("fan_frames_meta.json", {"window": list(FAN_WINDOW), "quantity": "u - f1",
                                           "layout": "rows t, columns x"})
    run.write_text("plot.gp", _gnuplot("u - f1 near the fan boundary", [
        f"set cbrange [{FAN_WINDOW[0]}:{FAN_WINDOW[1]}]; set palette gray",
        "plot 'fan_frames_below.csv' matrix nonuniform with image"]))
    run.summary.update({"theta_brackets": [list(b) for b in res.brackets],
                        "outcomes": [o.kind for o in res.outcomes]})


def cmd_orbit_spectrum(cfg: RunConfig, run: Run, workers: int, path: str | None):
    path = path or cfg.trajectory
    if not path or not os.path.isfile(os.path.join(path, "manifest.json")):
        raise DomainError(f"no trajectory directory at {path!r}")
    traj = Trajectory.load(path)
    c = traj.c if traj.c is not None else cfg.c
    eqs = _scan(dataclasses.replace(cfg, X=traj.grid.X, n=traj.grid.n), [c], workers).equilibria
    first = traj.values[0]
    source = min(eqs, key=lambda e: np.abs(e.profile.values - first).max())
    trace = trace_orbit_spectrum(traj, cfg.k_trace)
    trace.write_csv(run.path("trace.csv"))
    traj.outcome = None
    try:
        rep = connection_report(traj, eqs, source, trace, cfg.gap_tol)
        run.write_json("connection.json", rep.to_json())
        run.summary.update(rep.to_json())
    except DomainError as exc:
        run.write_json("connection.json", {"error": str(exc)})
        run.summary["connection_error"] = str(exc)
    run.write_text("plot.gp", _gnuplot("top eigenvalues of H(t) along the orbit", [
        "set xlabel 't'; set ylabel 'lambda'",
        f"plot for [j=2:{trace.k + 1}] 'trace.csv' using 1:j with lines"]))
    run.summary.update({"crossings": [[j, t, d] for j, t, d, _ in trace.crossings],
                        "spectral_flow": trace.spectral_flow})


def cmd_evolve(cfg: RunConfig, run: Run, workers: int):
    c = None if cfg.forcing == "off" else (-1.2 if cfg.c is None else cfg.c)
    grid = cfg.grid()
    eqs = _scan(cfg, [c], workers).equilibria
    if cfg.initial == "constant":
        u0 = GridFunction(grid, np.full(grid.n, cfg.u0_value))
    elif cfg.initial == "bump":
        base = min((e for e in eqs if e.unstable_dim == 0), key=lambda e: e.shoot.f0, default=None)
        if base is None:
            raise DomainError(f"no stable steady state at c={c} to perturb")
        u0 = FrontierProbe(base, -1.0 if cfg.A is None else cfg.A, cfg.bump_width).initial()
    elif cfg.initial == "fan":
        base = next((e for e in eqs if e.unstable_dim == 2), None)
        if base is None:
            raise DomainError(f"no steady state with two unstable directions at c={c}")
        e1, e2 = fan_basis(base).basis
        u0 = FanProbe(base, 0.1 if cfg.A is None else cfg.A, cfg.theta, e1, e2).initial()
    else:
        raise ConfigError(f"unknown initial kind {cfg.initial!r}")
    traj, outcome = evolve(u0, cfg.stepper(), c, eqs)
    traj.save(run.path("trajectory"))
    run.write_json("outcome.json", outcome.to_json())
    run.write_text("plot.gp", _gnuplot("trajectory frames", [
        "plot for [f in system('ls trajectory/frame_*.csv')] f using 1:2 with lines notitle"]))
    run.summary.update({"outcome": outcome.to_json(), "frames": len(traj)})


def cmd_verify(cfg: RunConfig, run: Run, workers: int):
    from .verify import run_checks
    report = run_checks(cfg, workers)
    run.write_json("verify.json", report)
    run.write_text("plot.gp", _gnuplot("verification", ["# the report is JSON; nothing to plot"]))
    run.summary.update({k: report[k] for k in ("residual", "order_estimate", "K_empirical")})


# ---------------------------------------------------------------- entry point

def build_parser():
    ap = argparse.ArgumentParser(prog="hlab", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("trajectory", nargs="?", help="trajectory directory (orbit-spectrum)")
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--workers", type=int, default=1, metavar="N")
    ap.add_argument("--strict", action="store_true")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.strict:
            cfg = cfg.strict()
        out = os.environ.get("HLAB_OUT") or args.out or cfg.out or os.path.join("hlab_out", args.subcommand)
        run = Run(out, args.subcommand, cfg)
        if args.subcommand == "orbit-spectrum":
            cmd_orbit_spectrum(cfg, run, args.workers, args.trajectory)
        else:
            {"equilibria": cmd_equilibria, "frontier": cmd_frontier, "fan": cmd_fan,
             "evolve": cmd_evolve, "verify": cmd_verify}[args.subcommand](cfg, run, args.workers)
        run.finish()
    except DomainError as exc:
        print(f"hlab {args.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except HlabError as exc:
        print(f"hlab {args.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
