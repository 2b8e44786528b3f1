"""Cache file format and the command-line driver."""
import json
import os
import struct

import numpy as np
import pytest

from photoconv import cache, cli
from photoconv.basestate import PhototaxisCurve, SuspensionParams, solve_base_state
from photoconv.numerics import expint_all
from photoconv.radiative import solve_basic_radiation
from photoconv.stability import CriticalMode


@pytest.fixture(scope="module")
def rad():
    return solve_basic_radiation(0.5, 0.4, A1=0.4, B=0.26, theta0=0.3,
                                 n_tau=101)


def test_radiation_cache_roundtrip(tmp_path, rad):
    path = tmp_path / "rad.phcv"
    cache.save_radiation(path, rad, n_tau=101)
    back = cache.load_radiation(path, 0.5, 0.4, 0.4, 0.26, 0.3, 101)
    assert back is not None
    for name in ("tau", "G", "q", "G_coll", "q_coll"):
        a, b = getattr(rad, name), getattr(back, name)
        assert a.tobytes() == b.tobytes(), name
    assert back.omega == rad.omega
    assert back.mu0 == rad.mu0
    # spline accessors work on the reloaded object
    assert back.G_at(0.21) == pytest.approx(rad.G_at(0.21), abs=1e-14)


def test_base_state_cache_roundtrip(tmp_path):
    p = SuspensionParams(Sc=20.0, Vc=15.0, tauH=0.5, omega=0.4, A1=0.0,
                         B=0.26, theta_i_deg=0.0, curve=PhototaxisCurve())
    r = solve_basic_radiation(0.5, 0.4, A1=0.0, B=0.26, theta0=0.0)
    bs = solve_base_state(p, r, n_z=65)
    path = tmp_path / "bs.phcv"
    cache.save_base_state(path, bs, n_z=65)
    back = cache.load_base_state(path, p, r, n_z=65)
    assert back is not None
    for name in ("z", "n_s", "tau_of_z", "G_s", "q_s", "G_s_coll", "M_s",
                 "dMdG"):
        a, b = getattr(bs, name), getattr(back, name)
        assert a.tobytes() == b.tobytes(), name
    assert back.n_top == bs.n_top
    assert back.mass() == pytest.approx(1.0, abs=1e-6)


def test_cache_key_mismatch_returns_none(tmp_path, rad):
    path = tmp_path / "rad.phcv"
    cache.save_radiation(path, rad, n_tau=101)
    with pytest.warns(UserWarning, match="parameter digest"):
        assert cache.load_radiation(path, 0.5, 0.4, 0.4, 0.26, 0.31, 101) is None


def test_cache_kind_mismatch_returns_none(tmp_path, rad):
    path = tmp_path / "rad.phcv"
    cache.save_radiation(path, rad, n_tau=101)
    params = cache._radiation_params(0.5, 0.4, 0.4, 0.26, rad.mu0, 101)
    with pytest.warns(UserWarning):
        assert cache.load_arrays(path, cache.KIND_BASESTATE, params) is None


def test_cache_corruption_and_version(tmp_path, rad):
    path = tmp_path / "rad.phcv"
    cache.save_radiation(path, rad, n_tau=101)
    blob = path.read_bytes()

    bad_magic = tmp_path / "m.phcv"
    bad_magic.write_bytes(b"XXXX" + blob[4:])
    with pytest.warns(UserWarning, match="magic"):
        assert cache.load_radiation(bad_magic, 0.5, 0.4, 0.4, 0.26, 0.3, 101) is None

    bumped = tmp_path / "v.phcv"
    bumped.write_bytes(blob[:4] + struct.pack("<H", cache.VERSION + 1)
                       + blob[6:])
    with pytest.warns(UserWarning, match="version"):
        assert cache.load_radiation(bumped, 0.5, 0.4, 0.4, 0.26, 0.3, 101) is None

    trunc = tmp_path / "t.phcv"
    trunc.write_bytes(blob[:-4])  # last array loses its tail
    with pytest.warns(UserWarning, match="truncated"):
        assert cache.load_radiation(trunc, 0.5, 0.4, 0.4, 0.26, 0.3, 101) is None

    assert cache.load_radiation(tmp_path / "absent.phcv",
                                0.5, 0.4, 0.4, 0.26, 0.3, 101) is None


def test_parse_config_defaults_and_overrides():
    cfg = cli.parse_config("")
    assert cfg.Vc == 15.0 and cfg.tauH == 0.5 and cfg.n_z == 129
    cfg = cli.parse_config("A1 = 0.8, tauH = 0.5")
    assert cfg.A1 == 0.8 and cfg.tauH == 0.5
    assert cfg.omega == 0.4  # untouched default
    cfg = cli.parse_config("# comment\nVc = 10\nk_max = 6.5  # trailing\n")
    assert cfg.Vc == 10.0 and cfg.k_max == 6.5


def test_parse_config_errors():
    with pytest.raises(cli.ConfigError, match="theta_i_deg"):
        cli.parse_config("theta_i_deg = 95")
    with pytest.raises(cli.ConfigError, match="line 2"):
        cli.parse_config("A1 = 0.4\nnot_a_key = 1")
    with pytest.raises(cli.ConfigError, match="line 1"):
        cli.parse_config("A1 0.4")
    with pytest.raises(cli.ConfigError, match="n_z"):
        cli.parse_config("n_z = 32")
    with pytest.raises(cli.ConfigError, match="k_max"):
        cli.parse_config("k_min = 3.0, k_max = 2.0")


def _run(tmp_path, command, text="", extra=()):
    cfgfile = tmp_path / "case.cfg"
    cfgfile.write_text(text)
    argv = [command, "--config", str(cfgfile), "--out", str(tmp_path)]
    argv += list(extra)
    return cli.main(argv)


def test_cli_radiation_closed_form(tmp_path, capsys):
    rc = _run(tmp_path, "radiation", "omega = 0\nB = 0.26\nn_tau = 64\n")
    assert rc == 0
    out = capsys.readouterr().out
    assert "defaulted keys" in out and "effective config" in out
    lines = (tmp_path / "radiation.csv").read_text().strip().splitlines()
    assert lines[0].strip() == "tau,G,q,G_coll"
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    E = expint_all(3, data[:, 0])
    G_ref = 2.0 * 0.26 * E[1] + np.exp(-data[:, 0])
    assert np.max(np.abs(data[:, 1] - G_ref)) < 1e-8
    rec = json.loads((tmp_path / "radiation_record.json").read_text())
    assert rec["residual"] < 1e-10
    assert rec["config"]["omega"] == 0.0


def test_cli_base_state_uniform(tmp_path):
    rc = _run(tmp_path, "base-state", "Vc = 0\nn_z = 65\nn_tau = 64\n")
    assert rc == 0
    lines = (tmp_path / "base_state.csv").read_text().strip().splitlines()
    assert lines[0].strip() == "z,n_s,tau,G_s,q_s,M_s"
    ns = [float(ln.split(",")[1]) for ln in lines[1:]]
    assert all(v == 1.0 for v in ns)
    rec = json.loads((tmp_path / "base_state_record.json").read_text())
    assert rec["mass"] == pytest.approx(1.0, abs=1e-12)


def test_cli_determinism_and_cache(tmp_path):
    text = "omega = 0.4\nA1 = 0.4\nn_tau = 64\n"
    d1, d2 = tmp_path / "a", tmp_path / "b"
    d1.mkdir(), d2.mkdir()
    cfgfile = tmp_path / "case.cfg"
    cfgfile.write_text(text)
    assert cli.main(["radiation", "--config", str(cfgfile), "--out", str(d1)]) == 0
    assert cli.main(["radiation", "--config", str(cfgfile), "--out", str(d2)]) == 0
    b1 = (d1 / "radiation.csv").read_bytes()
    b2 = (d2 / "radiation.csv").read_bytes()
    assert b1 == b2
    assert any(f.suffix == ".bin" for f in (d1 / "cache").iterdir())
    # second run in the same directory reuses the cache and reproduces bytes
    assert cli.main(["radiation", "--config", str(cfgfile), "--out", str(d1)]) == 0
    assert (d1 / "radiation.csv").read_bytes() == b1


def test_cli_no_cache_writes_nothing(tmp_path):
    rc = _run(tmp_path, "radiation", "n_tau = 64\n", extra=("--no-cache",))
    assert rc == 0
    assert not (tmp_path / "cache").exists()


def test_cli_corrupt_cache_recovers(tmp_path):
    text = "n_tau = 64\n"
    assert _run(tmp_path, "radiation", text) == 0
    good = (tmp_path / "radiation.csv").read_bytes()
    cdir = tmp_path / "cache"
    victims = list(cdir.iterdir())
    assert victims
    for v in victims:
        v.write_bytes(v.read_bytes()[:40])
    with pytest.warns(UserWarning):
        assert _run(tmp_path, "radiation", text) == 0
    assert (tmp_path / "radiation.csv").read_bytes() == good


def test_cli_config_error_exit_code(tmp_path, capsys):
    rc = _run(tmp_path, "radiation", "omega = 2.0\n")
    assert rc == 2
    assert "omega" in capsys.readouterr().err


def test_cli_solver_failure_reports(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise RuntimeError("deliberate failure")

    monkeypatch.setitem(cli._COMMANDS, "radiation", boom)
    rc = _run(tmp_path, "radiation")
    assert rc == 1
    assert "deliberate failure" in capsys.readouterr().err
    rec = json.loads((tmp_path / "radiation_record.json").read_text())
    assert rec["status"] == "failed"


def test_cli_neutral_curve_output(tmp_path):
    # tiny stationary scan on the cheap reference case
    text = ("n_tau = 64\nn_z = 65\nn_polar = 8\nn_azimuth = 8\n"
            "k_min = 2.4\nk_max = 3.2\nn_k = 3\n")
    rc = _run(tmp_path, "neutral-curve", text)
    assert rc == 0
    lines = (tmp_path / "neutral_curve.csv").read_text().strip().splitlines()
    assert lines[0].strip() == "k,R,sigma,branch_kind"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 3
    ks = [float(r[0]) for r in rows]
    assert ks == sorted(ks)
    assert {r[3] for r in rows} == {"stationary"}


def test_cli_table_grid_order(tmp_path, monkeypatch):
    calls = []

    def fake_row(cfg):
        calls.append((cfg.Vc, cfg.tauH, cfg.B, cfg.theta_i_deg, cfg.A1))
        k_c = 2.0
        cm = CriticalMode(k_c=k_c, R_c=100.0 + len(calls), lambda_c=np.pi,
                          sigma_c=0.0, overstable=False, mode_number=1)
        row = (cfg.Vc, cfg.tauH, cfg.omega, cfg.B, cfg.theta_i_deg, cfg.A1,
               cm.lambda_c, cm.R_c, cm.sigma_c)
        return cm, row, {}

    monkeypatch.setattr(cli, "_critical_row", fake_row)
    rc = _run(tmp_path, "table")
    assert rc == 0
    assert len(calls) == 54
    # outer-to-inner nesting: Vc, then (tauH, B) pairs, then theta, then A1
    assert calls[0] == (10.0, 0.5, 0.26, 0.0, 0.0)
    assert calls[1] == (10.0, 0.5, 0.26, 0.0, 0.4)
    assert calls[3] == (10.0, 0.5, 0.26, 40.0, 0.0)
    assert calls[9] == (10.0, 1.0, 0.48, 0.0, 0.0)
    assert calls[18] == (15.0, 0.5, 0.26, 0.0, 0.0)
    assert calls[-1] == (20.0, 1.0, 0.48, 80.0, 0.8)
    lines = (tmp_path / "table.csv").read_text().strip().splitlines()
    assert len(lines) == 55
    assert lines[0].strip() == ",".join(cli._SUMMARY_HEADER)
    # rows come out in grid order even though R_c values are shuffled
    rcs = [float(ln.split(",")[7]) for ln in lines[1:]]
    assert rcs == [100.0 + i for i in range(1, 55)]
    rec = json.loads((tmp_path / "table_record.json").read_text())
    assert len(rec["cases"]) == 54


def test_cli_critical_record_invariant(tmp_path, monkeypatch):
    def fake_row(cfg):
        k_c = 2.86
        cm = CriticalMode(k_c=k_c, R_c=711.4, lambda_c=2.0 * np.pi / k_c,
                          sigma_c=0.0, overstable=False, mode_number=1)
        row = (cfg.Vc, cfg.tauH, cfg.omega, cfg.B, cfg.theta_i_deg, cfg.A1,
               cm.lambda_c, cm.R_c, cm.sigma_c)
        return cm, row, {"base_state_mass": 1.0}

    monkeypatch.setattr(cli, "_critical_row", fake_row)
    rc = _run(tmp_path, "critical")
    assert rc == 0
    rec = json.loads((tmp_path / "critical_record.json").read_text())
    assert rec["lambda_c"] * rec["k_c"] == pytest.approx(2.0 * np.pi, abs=1e-10)
    lines = (tmp_path / "critical.csv").read_text().strip().splitlines()
    vals = lines[1].split(",")
    assert float(vals[6]) == pytest.approx(rec["lambda_c"], rel=1e-15)


def test_cli_threads_validation(tmp_path):
    assert cli.main(["radiation", "--out", str(tmp_path), "--threads", "0"]) == 2


def test_cli_table_threaded_stub(tmp_path, monkeypatch):
    # per-case work may run on a pool; the output order must not change
    def fake_row(cfg):
        cm = CriticalMode(k_c=2.0, R_c=cfg.Vc + cfg.A1, lambda_c=np.pi,
                          sigma_c=0.0, overstable=False, mode_number=1)
        row = (cfg.Vc, cfg.tauH, cfg.omega, cfg.B, cfg.theta_i_deg, cfg.A1,
               cm.lambda_c, cm.R_c, cm.sigma_c)
        return cm, row, {}

    monkeypatch.setattr(cli, "_critical_row", fake_row)
    rc = _run(tmp_path, "table", extra=("--threads", "4"))
    assert rc == 0
    lines = (tmp_path / "table.csv").read_text().strip().splitlines()
    rcs = [float(ln.split(",")[7]) for ln in lines[1:]]
    expect = [Vc + A1 for Vc in (10.0, 15.0, 20.0) for _ in range(2)
              for _ in (0.0, 40.0, 80.0) for A1 in (0.0, 0.4, 0.8)]
    assert rcs == expect
