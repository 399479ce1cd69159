import json
import os

import numpy as np
import pytest

from hlab import cli
from hlab.config import ConfigError, RunConfig
from hlab.evolution import constant_trajectory
from hlab.verify import REPORT_KEYS


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(tmp_path, sub, text="", out="out", extra=()):
    d = tmp_path / out
    rc = cli.main([sub, "--config", _cfg(tmp_path, text, f"{out}.cfg"), "--out", str(d), *extra])
    return rc, d


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


# ---------------------------------------------------------------- config

def test_parse_comments_ranges_and_lists():
    cfg = RunConfig.parse("# header\nX = 10  # half width\nn = 201\n\nc_values = 0.03:0.09:0.03\n"
                          "thetas = 1.0, 2.0\nc = none\ncontinuation = yes\n")
    assert cfg.X == 10.0 and cfg.n == 201 and cfg.c is None
    assert cfg.c_values == [0.03, 0.06, 0.09]
    assert cfg.thetas == [1.0, 2.0]
    assert cfg.grid().n == 201


def test_empty_list_is_not_the_default():
    assert RunConfig.parse("c_values =").c_values == []
    assert RunConfig().c_values is None


@pytest.mark.parametrize("text", ["bogus = 1", "X = wide", "n = 200", "tol_eq = 0", "tol_A = -1",
                                  "continuation = maybe", "forcing = sometimes", "no equals sign"])
def test_bad_config_is_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "absent.cfg")


def test_strict_mode():
    cfg = RunConfig.parse("n = 401\ndt = 0.02").strict()
    assert cfg.n == 801 and cfg.dt == 0.01 and cfg.snapshot_stride == 20
    assert cfg.tol_eq == pytest.approx(1e-10) and cfg.gap_tol == pytest.approx(1e-4)


def test_config_echo_roundtrips():
    cfg = RunConfig.parse("X = 12\nn = 301\nc = 0.5")
    assert RunConfig(**cfg.echo()) == cfg


# ---------------------------------------------------------------- exit codes

def test_unknown_subcommand(capsys):
    assert cli.main(["bogus"]) == 2


def test_help():
    assert cli.main(["--help"]) == 0


def test_bad_worker_count(tmp_path):
    assert cli.main(["equilibria", "--workers", "0", "--out", str(tmp_path)]) == 2


def test_unknown_config_key_exits_2(tmp_path):
    rc, _ = _run(tmp_path, "equilibria", "bogus = 1")
    assert rc == 2


def test_missing_trajectory(tmp_path, capsys):
    assert cli.main(["orbit-spectrum", str(tmp_path / "absent"), "--out", str(tmp_path / "o")]) == 2
    assert "no trajectory" in capsys.readouterr().err


def test_frontier_without_bracket(tmp_path, capsys):
    rc, _ = _run(tmp_path, "frontier", "A_lo = -1.0\nA_hi = -0.5\n")
    assert rc == 2
    assert "NoBracket" in capsys.readouterr().err


def test_internal_failure_exits_1(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("boom")
    monkeypatch.setattr(cli, "cmd_equilibria", boom)
    rc, _ = _run(tmp_path, "equilibria")
    assert rc == 1


# ---------------------------------------------------------------- equilibria

def test_equilibria_default(tmp_path):
    rc, d = _run(tmp_path, "equilibria")
    assert rc == 0
    rows = (d / "diagram.csv").read_text().splitlines()
    assert rows[0] == "c,f0,fp0,residual,unstable_dim"
    assert len(rows) == 2 and rows[1].split(",")[-1] == "0"
    man = _manifest(d)
    assert man["subcommand"] == "equilibria" and man["summary"]["dims"] == [0]
    assert man["config"]["tol_eq"] == 1e-9
    listed = set(man["files"])
    on_disk = {os.path.relpath(os.path.join(r, f), d) for r, _, fs in os.walk(d) for f in fs}
    assert on_disk == listed | {"manifest.json"}


def test_equilibria_is_deterministic(tmp_path):
    text = "c_values = -1.2, 0.0\nseed_count = 11\ncontinuation = no\n"
    _, a = _run(tmp_path, "equilibria", text, "a")
    _, b = _run(tmp_path, "equilibria", text, "b")
    assert (a / "diagram.csv").read_bytes() == (b / "diagram.csv").read_bytes()
    assert _manifest(a)["summary"] == _manifest(b)["summary"]


def test_empty_c_list(tmp_path):
    rc, d = _run(tmp_path, "equilibria", "c_values =\n")
    assert rc == 0
    assert (d / "diagram.csv").read_text() == "c,f0,fp0,residual,unstable_dim\n"
    assert json.loads((d / "events.json").read_text()) == []


def test_env_overrides_out(tmp_path, monkeypatch):
    target = tmp_path / "env"
    monkeypatch.setenv("HLAB_OUT", str(target))
    rc, d = _run(tmp_path, "equilibria", "seed_count = 11\n")
    assert rc == 0
    assert (target / "manifest.json").exists() and not d.exists()


def test_sweep_finds_both_fork_events(tmp_path):
    rc, d = _run(tmp_path, "equilibria", "c_values = -1.2:0.2:0.1\n", extra=("--workers", "4"))
    assert rc == 0
    ev = json.loads((d / "events.json").read_text())
    assert any(abs(e["c_event"] - 0.0501) <= 0.005 for e in ev)
    assert any(abs(e["c_event"] - 0.0740) <= 0.005 for e in ev)


# ---------------------------------------------------------------- evolve, orbit spectrum, verify

def test_riccati_evolve(tmp_path):
    rc, d = _run(tmp_path, "evolve", "forcing = off\ninitial = constant\nu0_value = -1\nt_max = 5\n")
    assert rc == 0
    out = json.loads((d / "outcome.json").read_text())
    assert out["kind"] == "blowup"
    lo, hi = out["t_star_bracket"]
    assert lo <= 1.02 and hi >= 0.98
    assert (d / "trajectory" / "manifest.json").exists()


def test_orbit_spectrum_of_a_constant_trajectory(tmp_path, f0):
    src = tmp_path / "const"
    constant_trajectory(f0.profile, np.linspace(0, 10, 11), -1.2).save(src)
    rc = cli.main(["orbit-spectrum", str(src), "--out", str(tmp_path / "o")])
    assert rc == 0
    trace = np.loadtxt(tmp_path / "o" / "trace.csv", delimiter=",", skiprows=1)
    assert np.ptp(trace[:, 1:], axis=0).max() == 0.0
    rep = json.loads((tmp_path / "o" / "connection.json").read_text())
    assert rep["connecting_dim"] == 0


VERIFY_CFG = "X = 10\nn = 201\nverify_T = 5\n"


def test_verify_schema(tmp_path):
    rc, d = _run(tmp_path, "verify", VERIFY_CFG, "v")
    assert rc == 0
    rep = json.loads((d / "verify.json").read_text())
    assert set(rep) == set(REPORT_KEYS)
    assert rep["gamma_at_zero"] == 0.0 and rep["order_estimate"] >= 1.8
    assert all(m["match"] for m in rep["kernel_matches"])
    rc, d2 = _run(tmp_path, "verify", VERIFY_CFG, "v2")
    assert json.loads((d2 / "verify.json").read_text()) == rep


def test_verify_strict(tmp_path):
    rc, d = _run(tmp_path, "verify", VERIFY_CFG, "s", extra=("--strict",))
    assert rc == 0
    rep = json.loads((d / "verify.json").read_text())
    assert rep["grid"]["n"] == 401
    assert rep["order_estimate"] >= 1.8


# ---------------------------------------------------------------- fan

def test_fan_zero_amplitude_warns(tmp_path, caplog):
    rc, d = _run(tmp_path, "fan", "c = 0\nA = 0\nthetas = 0, 1, 2\nfan_t_max = 10\n")
    assert rc == 0
    assert "no transition" in caplog.text
    assert json.loads((d / "fan.json").read_text())["theta_bracket"] == []


def test_fan_theta_list_has_a_transition(tmp_path):
    rc, d = _run(tmp_path, "fan", "c = 0\nA = 0.1\n"
                 "thetas = 1.11494, 1.11496, 1.11497, 1.11498, 1.11499, 1.115\n", extra=("--workers", "4"))
    assert rc == 0
    kinds = _manifest(d)["summary"]["outcomes"]
    assert len(set(kinds)) > 1
