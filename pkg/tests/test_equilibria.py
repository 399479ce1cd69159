import json

import numpy as np
import pytest

from hlab.equilibria import (DEDUP_TOL, TOL_BOUNDARY, TOL_EQ, TOL_SHOOT, ShootState, continue_branch, switch_branch,
                             default_seeds, fd_residual, merge_events, scan_diagram, shoot_residual,
                             solve_equilibrium, write_diagram_csv, write_events_json)
from hlab.grid import forcing_values, make_grid
from hlab.spectrum import unstable_dim


def test_unforced_zero_shot(grid):
    miss = shoot_residual(ShootState(0.0, 0.0, None), grid)
    assert tuple(miss) == (0.0, 0.0) and not miss.diverged


def test_solved_state_hits_both_ends(f0, grid):
    assert shoot_residual(f0.shoot, grid).size <= TOL_SHOOT


def test_runaway_shot_is_flagged(grid):
    assert shoot_residual(ShootState(10.0, 0.0, -1.2), grid).diverged


def test_solve_from_coarse_guess(grid, f0):
    e = solve_equilibrium(ShootState(-0.3, 0.0, -1.2), grid)
    assert e.unstable_dim == 0
    assert e.shoot.distance(f0.shoot) < 1e-6


def test_solve_f1(grid, f1):
    e = solve_equilibrium(ShootState(-1.2, 0.0, 0.0), grid)
    assert e.unstable_dim == 2
    assert e.shoot.distance(f1.shoot) < 1e-6


def test_unforced_zero_solution(grid):
    e = solve_equilibrium(ShootState(0.0, 0.0, None), grid)
    assert e.residual == 0.0 and e.unstable_dim == 0
    assert not e.profile.values.any()


def test_unique_state_in_stable_regime(scan_stable_regime):
    (e,) = scan_stable_regime.equilibria
    assert e.unstable_dim == 0 and e.color == "green"


def test_two_states_at_zero(scan_c0):
    dims = sorted(e.unstable_dim for e in scan_c0.equilibria)
    assert len(dims) >= 2 and 2 in dims
    assert any(e.color == "red" for e in scan_c0.equilibria)


def test_fork_arm_regime(grid):
    scan = scan_diagram([0.06], lambda c: default_seeds(c), grid)
    arms = [e for e in scan.equilibria if e.unstable_dim == 2]
    assert len(arms) == 2
    # the arms are mirror images
    a, b = arms
    assert a.shoot.f0 == pytest.approx(b.shoot.f0, abs=1e-8)
    assert a.shoot.fp0 == pytest.approx(-b.shoot.fp0, abs=1e-8)


def test_scan_properties(scan_stable_regime, scan_c0, grid):
    eqs = scan_stable_regime.equilibria + scan_c0.equilibria
    for e in eqs:
        p = forcing_values(grid.x, e.c)
        assert np.abs(fd_residual(e.profile.values, p, grid.h)).max() <= TOL_EQ
        assert e.residual <= TOL_EQ
        v = e.profile.values
        assert abs(v[1]) <= TOL_BOUNDARY and abs(v[-2]) <= TOL_BOUNDARY
        assert unstable_dim(e.profile) == e.unstable_dim
        assert e.admissible
    for scan in (scan_stable_regime, scan_c0):
        for i, a in enumerate(scan.equilibria):
            for b in scan.equilibria[i + 1:]:
                assert a.shoot.distance(b.shoot) >= DEDUP_TOL


def test_artifacts_are_separated(scan_c0):
    # solutions whose far tail dips below zero are truncation artifacts
    for e in scan_c0.artifacts:
        assert not e.admissible and e.tail_min < 0


def test_seed_grid_default():
    seeds = default_seeds(0.0)
    assert len(seeds) == 31 * 31
    assert min(s.f0 for s in seeds) == -3.0 and max(s.fp0 for s in seeds) == 3.0


@pytest.fixture(scope="module")
def fork_branches(grid):
    scan = scan_diagram([0.03, 0.06], lambda c: default_seeds(c), grid)
    top = next(e for e in scan.at(0.03) if e.unstable_dim == 2)
    arm = next(e for e in scan.at(0.06) if e.unstable_dim == 2 and e.shoot.fp0 > 0)
    return top, arm


def test_symmetric_branch_event(fork_branches):
    top, _ = fork_branches
    br = continue_branch(top, (0.03, 0.09), 1e-3, direction=1)
    kinds = [(e.kind, e.c_event) for e in br.events]
    assert len(kinds) == 1 and kinds[0][0] == "branch_point"
    ev = br.events[0]
    assert ev.c_bracket[1] - ev.c_bracket[0] <= 1e-4
    assert abs(ev.c_event - 0.0501) <= 0.005


def test_arm_branch_event(fork_branches):
    _, arm = fork_branches
    br = continue_branch(arm, (0.03, 0.09), 1e-3, direction=1)
    assert [e.kind for e in br.events] == ["admissibility"]
    assert abs(br.events[0].c_event - 0.0740) <= 0.005
    assert br.c_values.max() <= br.events[0].c_bracket[1] + 1e-3


def test_continuation_direction_invariance(grid, fork_branches):
    top, _ = fork_branches
    up = continue_branch(top, (0.03, 0.09), 1e-3, direction=1)
    far = up.points[-1]
    start = solve_equilibrium(ShootState(far.shoot.f0, far.shoot.fp0, 0.09), grid)
    down = continue_branch(start, (0.03, 0.09), 1e-3, direction=-1)
    assert len(down.events) == len(up.events) == 1
    assert abs(down.events[0].c_event - up.events[0].c_event) <= 2e-3


def test_unforced_branch_is_constant(grid):
    e = solve_equilibrium(ShootState(0.0, 0.0, None), grid)
    br = continue_branch(e, (-1.0, 1.0), 0.1)
    assert not br.events
    assert all(not p.profile.values.any() for p in br.points)


def test_stable_branch_has_no_events(f0):
    br = continue_branch(f0, (-1.2, 0.2), 1e-3)
    assert not br.events
    assert br.c_values.max() >= 0.2
    assert {p.unstable_dim for p in br.points} == {0}


def test_start_outside_range(f0):
    with pytest.raises(ValueError):
        continue_branch(f0, (0.0, 0.1))


def test_output_files(tmp_path, scan_c0, fork_branches):
    write_diagram_csv(tmp_path / "d.csv", scan_c0.equilibria)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "c,f0,fp0,residual,unstable_dim"
    assert len(lines) == 1 + len(scan_c0.equilibria)
    top, _ = fork_branches
    br = continue_branch(top, (0.03, 0.09), 1e-3, direction=1)
    ev = merge_events([br, br], 2e-3)
    assert len(ev) == 1
    write_events_json(tmp_path / "e.json", ev)
    (rec,) = json.loads((tmp_path / "e.json").read_text())
    assert set(rec) == {"branch_id", "c_event", "kind"}


def test_coarser_grid_agrees(f0):
    # the steady state converges with the grid; X is already large enough
    g = make_grid(20.0, 401)
    e = solve_equilibrium(ShootState(f0.shoot.f0, 0.0, -1.2), g)
    assert abs(e.profile.at_zero() - f0.profile.at_zero()) <= 5 * g.h ** 2
    g2 = make_grid(30.0, 1201)
    e2 = solve_equilibrium(ShootState(f0.shoot.f0, 0.0, -1.2), g2)
    assert e2.admissible
    assert abs(e2.profile.at_zero() - f0.profile.at_zero()) <= 1e-5


def test_top_branch_enters_from_the_far_field(f1):
    # followed down in c, f1 loses positivity in the far field before any fold
    br = continue_branch(f1, (-1.2, 0.0), 1e-3, direction=-1)
    assert [e.kind for e in br.events] == ["admissibility"]
    assert br.events[0].c_event < 0
    assert not br.points[-1].admissible


def test_switching_at_the_branch_point(fork_branches):
    top, arm = fork_branches
    br = continue_branch(top, (0.03, 0.09), 1e-3, direction=1)
    found = switch_branch(br, br.events[0])
    assert len(found) == 2
    a, b = found
    assert a.shoot.fp0 == pytest.approx(-b.shoot.fp0, abs=1e-8)
    assert all(e.c > br.events[0].c_event and e.unstable_dim == 2 for e in found)
    # the arm reached from the branch point is the one found by the scan
    up = continue_branch(max(found, key=lambda e: e.shoot.fp0), (0.03, 0.09), 1e-3, direction=1)
    near = min(up.points, key=lambda p: abs(p.c - arm.c))
    assert near.shoot.distance(arm.shoot) <= 5e-3
