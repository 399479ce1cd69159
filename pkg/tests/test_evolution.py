import numpy as np
import pytest

from hlab.errors import AmbiguousConvergence
from hlab.evolution import (BlowUp, Converged, IMEXStepper, StepperConfig, Trajectory, Undetermined,
                            classify, constant_trajectory, evolve, evolve_linearized, fit_growth_rate,
                            outcome_from_json, step)
from hlab.equilibria import TOL_EQ
from hlab.grid import GridFunction, make_grid
from hlab.manifold import FrontierProbe
from hlab.spectrum import unstable_subspace


def test_zero_is_fixed_without_forcing(grid):
    assert not step(grid.zeros(), 0.01, None).values.any()


def test_steady_state_is_a_fixed_point(f0):
    dt = 0.01
    u = step(f0.profile, dt, -1.2)
    assert np.abs(u.values - f0.profile.values).max() <= TOL_EQ * dt


def _drift(e, dt, n):
    st = IMEXStepper(e.profile.grid, e.c, dt)
    u = np.array(e.profile.values)
    for _ in range(n):
        u = st.step(u)
    return np.abs(u - e.profile.values).max()


def test_steady_state_drift_over_many_steps(f0, stable_c0):
    for e in (f0, stable_c0):
        assert _drift(e, 0.01, 1000) <= 1000 * TOL_EQ * 0.01


def test_unstable_state_drift_is_amplified_rounding(f1):
    # round-off grows along the top unstable direction like exp(lambda t)
    lam = unstable_subspace(f1.profile).eigenvalues[-1]
    assert _drift(f1, 0.01, 1000) <= 1000 * TOL_EQ * 0.01 * np.exp(lam * 10.0)


def test_constant_riccati_step():
    # the interior away from the Dirichlet ends follows u' = -u^2
    g = make_grid(20.0, 801)
    errs = []
    dts = (0.02, 0.01, 0.005)
    for dt in dts:
        u0 = -0.5
        u = step(GridFunction(g, np.full(g.n, u0)), dt, None)
        exact = u0 / (1 + u0 * dt)
        errs.append(abs(u.at_zero() - exact))
        assert errs[-1] <= dt ** 3
    assert np.polyfit(np.log(dts), np.log(errs), 1)[0] >= 2.8


def test_riccati_blowup():
    g = make_grid()
    tr, out = evolve(GridFunction(g, np.full(g.n, -1.0)), StepperConfig(t_max=5.0), None)
    assert isinstance(out, BlowUp)
    lo, hi = out.t_star_bracket
    assert lo < hi and lo <= 1.02 and hi >= 0.98
    assert np.all(np.abs(tr.values) < 1e6)


def test_positive_constant_decays():
    g = make_grid()
    tr, out = evolve(GridFunction(g, np.full(g.n, 1.0)), StepperConfig(t_max=20.0), None)
    assert isinstance(out, Undetermined)
    # u ~ 1/(1+t) in the middle
    assert tr.final.at_zero() == pytest.approx(1 / 21, rel=1e-2)


def test_deep_bump_blows_up(f0):
    _, out = evolve(FrontierProbe(f0, -3.0).initial(), StepperConfig(), -1.2, [f0], record=False)
    assert isinstance(out, BlowUp)


def test_shallow_bump_converges(f0):
    tr, out = evolve(FrontierProbe(f0, -1.0).initial(), StepperConfig(), -1.2, [f0])
    assert isinstance(out, Converged) and out.equilibrium_label == f0.label
    assert classify(tr, [f0]) == out


def test_classify_constant_frames(f0):
    tr = constant_trajectory(f0.profile, np.linspace(0, 10, 11), -1.2)
    out = classify(tr, [f0])
    assert isinstance(out, Converged) and out.t_enter == 0.0
    short = constant_trajectory(f0.profile, np.linspace(0, 1, 11), -1.2)
    assert isinstance(classify(short, [f0]), Undetermined)


def test_ambiguous_match(f0):
    tr = constant_trajectory(f0.profile, [0.0, 10.0], -1.2)
    with pytest.raises(AmbiguousConvergence):
        classify(tr, [f0, f0])


def test_temporal_self_convergence(f0):
    g = f0.profile.grid
    u0 = FrontierProbe(f0, -0.5).initial()
    T = 1.0
    finals = []
    for dt in (0.02, 0.01, 0.005):
        st = IMEXStepper(g, -1.2, dt)
        u = np.array(u0.values)
        for _ in range(int(round(T / dt))):
            u = st.step(u)
        finals.append(u)
    e1 = np.abs(finals[0] - finals[1]).max()
    e2 = np.abs(finals[1] - finals[2]).max()
    assert np.log2(e1 / e2) >= 1.8


def test_riccati_bounds_unforced_runs():
    g = make_grid()
    m = 0.5
    u0 = GridFunction(g, -m * np.exp(-g.x ** 2))
    tr, _ = evolve(u0, StepperConfig(t_max=1.5, snapshot_stride=5), None)
    bound = m / (1 - m * tr.times)
    assert np.all(np.abs(tr.values).max(axis=1) <= bound + 1e-12)


def test_trajectory_roundtrip(tmp_path, f0):
    tr, out = evolve(FrontierProbe(f0, -1.0).initial(), StepperConfig(t_max=2.0), -1.2)
    names = tr.save(tmp_path / "run")
    assert "manifest.json" in names
    back = Trajectory.load(tmp_path / "run")
    assert np.array_equal(back.times, tr.times) and np.array_equal(back.values, tr.values)
    assert back.c == -1.2 and back.outcome == out
    assert outcome_from_json(out.to_json()) == out


def test_trajectory_interpolation(f0):
    g = f0.profile.grid
    tr = Trajectory(g, [0.0, 1.0], np.array([np.zeros(g.n), np.ones(g.n)]))
    assert np.allclose(tr.at(0.25), 0.25)


def test_linearized_zero(f1):
    base = constant_trajectory(f1.profile, [0.0, 5.0], 0.0)
    v = evolve_linearized(f1.profile.grid.zeros(), base, StepperConfig())
    assert not v.values.any()


def test_linearized_growth_along_e2(f1):
    sub = unstable_subspace(f1.profile)
    base = constant_trajectory(f1.profile, [0.0, 5.0], 0.0)
    v = evolve_linearized(sub.basis[1], base, StepperConfig())
    assert fit_growth_rate(v) == pytest.approx(sub.eigenvalues[1], rel=0.05)


def test_linearized_random_start_grows_at_the_top_rate(f1, rng):
    sub = unstable_subspace(f1.profile)
    g = f1.profile.grid
    v0 = np.zeros(g.n)
    v0[1:-1] = rng.normal(size=g.n - 2) * np.exp(-g.x[1:-1] ** 2 / 8)
    base = constant_trajectory(f1.profile, [0.0, 20.0], 0.0)
    v = evolve_linearized(GridFunction(g, v0), base, StepperConfig())
    assert fit_growth_rate(v, t_from=10.0) == pytest.approx(sub.eigenvalues[-1], rel=0.05)


def test_linearized_decays_at_stable_state(f0, rng):
    g = f0.profile.grid
    v0 = np.zeros(g.n)
    v0[1:-1] = rng.normal(size=g.n - 2)
    base = constant_trajectory(f0.profile, [0.0, 10.0], -1.2)
    v = evolve_linearized(GridFunction(g, v0), base, StepperConfig())
    s = np.abs(v.values).max(axis=1)
    assert s[-1] < s[0] and fit_growth_rate(v, t_from=2.0) < 0


def test_config_validation():
    with pytest.raises(ValueError):
        StepperConfig(dt=0.0)
    with pytest.raises(ValueError):
        StepperConfig(blowup_threshold=0.5)
    assert StepperConfig().with_(dt=0.5).dt == 0.5
