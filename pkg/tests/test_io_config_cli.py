from __future__ import annotations

import json
import math

import numpy as np
import pytest

from logfrag.cli import run
from logfrag.config import ConfigError, load_config, parse_override
from logfrag.grid import build_grid
from logfrag.io import (
    dumps_json,
    fmt_float,
    read_field_csv,
    read_table_csv,
    write_field_csv,
    write_table_csv,
)


def _toml(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# ---- config ----


def test_defaults_filled():
    cfg = load_config()
    assert cfg["grid.n"] == 257
    assert cfg["problem.m0"] == 0.4
    assert cfg["criterion.j"] == "identity"


def test_minimal_file_and_int_to_float(tmp_path):
    cfg = load_config(_toml(tmp_path, "[problem]\nmu = 1\n"))
    assert cfg["problem.mu"] == 1.0 and isinstance(cfg["problem.mu"], float)
    assert cfg["grid.dim"] == 1


@pytest.mark.parametrize(
    "text,key,msg",
    [
        ("[problem]\nm0 = 1.2\n", "problem.m0", "m0 must lie in (0,1)"),
        ("[problem]\nmu = 0\n", "problem.mu", "mu must be positive"),
        ("[grid]\ndim = 3\n", "grid.dim", "dim must be 1 or 2"),
        ("[grid]\nn = true\n", "grid.n", "expected int"),
        ("[criterion]\nj = 'cubic'\n", "criterion.j", "j must be one of"),
        ("[problem]\nbogus = 1\n", "problem.bogus", "unknown configuration key"),
        ("[sweep]\nmu_min = 0.5\nmu_max = 0.1\n", "sweep.mu_max", "mu_max must be >= mu_min"),
        ("[problem]\nresource = 'sets'\n", "problem.sets", "non-empty"),
    ],
)
def test_config_errors_name_the_key(tmp_path, text, key, msg):
    with pytest.raises(ConfigError) as exc:
        load_config(_toml(tmp_path, text))
    assert str(exc.value).startswith(key + ":")
    assert msg in str(exc.value)


def test_config_missing_and_malformed(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "nope.toml")
    with pytest.raises(ConfigError, match="not valid TOML"):
        load_config(_toml(tmp_path, "[grid\n"))


def test_overrides():
    assert parse_override("problem.mu=0.05") == ("problem.mu", 0.05)
    assert parse_override("problem.sets=[[0.0, 0.5]]") == ("problem.sets", [[0.0, 0.5]])
    assert parse_override("criterion.j=log1p") == ("criterion.j", "log1p")
    cfg = load_config(None, ["grid.n=65", "problem.m0=0.3"])
    assert cfg["grid.n"] == 65 and cfg["problem.m0"] == 0.3
    with pytest.raises(ConfigError):
        parse_override("problem.mu")


# ---- io ----


def test_fmt_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, 0.0):
        s = fmt_float(x)
        assert float(s) == x
    assert fmt_float(0.1) == "0.10000000000000001"


def test_json_non_finite_is_null():
    doc = json.loads(dumps_json({"a": float("nan"), "b": [1.0, float("inf")], "c": np.float64(0.25)}))
    assert doc == {"a": None, "b": [1.0, None], "c": 0.25}


def test_table_csv_round_trip(tmp_path):
    rows = [{"k": 1, "v": 1 / 3, "ok": True}, {"k": 2, "v": float("nan"), "ok": False}]
    p = write_table_csv(tmp_path / "t.csv", rows)
    raw = p.read_bytes()
    assert raw.startswith(b"k,v,ok\r\n")
    back = read_table_csv(p)
    assert float(back[0]["v"]) == 1 / 3
    assert back[1]["k"] == "2"


@pytest.mark.parametrize("dim,n", [(1, 17), (2, 9)])
def test_field_csv_round_trip(tmp_path, dim, n):
    g = build_grid(dim, n)
    vals = np.random.default_rng(0).random(g.shape)
    p = write_field_csv(tmp_path / "f.csv", g, vals, "m")
    g2, back = read_field_csv(p)
    assert g2 == g
    assert np.array_equal(back, vals)


# ---- cli ----


def _run(tmp_path, *args):
    out = tmp_path / "out"
    code = run([*args, "--out", str(out)])
    return code, out


def test_cli_solve_constant(tmp_path, capsys):
    code, out = _run(tmp_path, "solve", "--set", "grid.n=65", "--set", "problem.m0=0.4")
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    assert res["total_population"] == pytest.approx(0.4, abs=1e-15)
    assert "total_population" in capsys.readouterr().out
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "solve"
    assert man["config_echo"]["problem.m0"] == 0.4
    for a in man["artifact_paths"]:
        assert (out / a).stat().st_size > 0
    assert "numpy" in man["versions"] and man["timestamp"]


def test_cli_solve_sets_and_csv_resource(tmp_path):
    code, out = _run(
        tmp_path, "solve", "--set", "grid.n=129", "--set", "problem.resource='sets'",
        "--set", "problem.sets=[[0.0, 0.5]]", "--set", "problem.mu=0.05",
    )
    assert code == 0
    first = json.loads((out / "result.json").read_text())
    assert 0.5 < first["total_population"] < 1.5
    cfg = _toml(
        tmp_path,
        f"[grid]\nn = 129\n[problem]\nmu = 0.05\nresource = 'csv'\nresource_csv = '{out / 'm.csv'}'\n",
    )
    out2 = tmp_path / "out2"
    assert run(["solve", "--config", str(cfg), "--out", str(out2)]) == 0
    second = json.loads((out2 / "result.json").read_text())
    assert second["total_population"] == first["total_population"]


def test_cli_config_error_exit_2(tmp_path, capsys):
    code, out = _run(tmp_path, "solve", "--set", "problem.m0=1.2")
    assert code == 2
    assert "m0 must lie in (0,1)" in capsys.readouterr().err
    assert not (out / "manifest.json").exists()


def test_cli_unknown_subcommand(capsys):
    assert run(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_csv_grid_mismatch_is_config_error(tmp_path):
    g = build_grid(1, 33)
    f = write_field_csv(tmp_path / "m.csv", g, g.full(0.4), "m")
    code, _ = _run(tmp_path, "solve", "--set", "problem.resource='csv'", "--set", f"problem.resource_csv='{f}'")
    assert code == 2


def test_cli_numerical_failure_exit_1(tmp_path):
    code, _ = _run(
        tmp_path, "solve", "--set", "problem.resource='sets'", "--set", "problem.sets=[[0.0, 0.2]]",
        "--set", "problem.mu=0.001", "--set", "solver.max_newton=1",
    )
    assert code == 1


def test_cli_optimize(tmp_path):
    code, out = _run(tmp_path, "optimize", "--set", "grid.n=65", "--set", "problem.mu=0.05",
                     "--set", "optimizer.restarts=1")
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    assert res["final_objective"] > 0.4
    assert res["seed"] == 0
    trace = read_table_csv(out / "trace.csv")
    assert float(trace[-1]["objective"]) == res["final_objective"]
    _, m = read_field_csv(out / "m_star.csv")
    assert m.min() >= 0 and m.max() <= 1


def test_cli_spectral(tmp_path):
    code, out = _run(tmp_path, "spectral", "--set", "grid.n=129", "--set", "problem.mu=0.1",
                     "--set", "spectral.K=5")
    assert code == 0
    rows = read_table_csv(out / "eigenvalues.csv")
    assert len(rows) == 5
    lam = [float(r["eigenvalue"]) for r in rows]
    assert lam[0] == pytest.approx(0.4, abs=1e-10)
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["found"] is True and cert["ascent"] > 0


def test_cli_spectral_bang_bang(tmp_path):
    code, out = _run(tmp_path, "spectral", "--set", "grid.n=129", "--set", "problem.resource='sets'",
                     "--set", "problem.sets=[[0.0, 0.4]]", "--set", "problem.indicator_mode='node'")
    assert code == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["applicable"] is False


def test_cli_verify(tmp_path, capsys):
    code, out = _run(tmp_path, "verify", "--set", "grid.n=129", "--set", "problem.mu=0.05",
                     "--set", "problem.resource='sets'", "--set", "problem.sets=[[0.1, 0.5]]")
    text = capsys.readouterr().out
    assert code == 0, text
    assert "ALL PASS" in text
    rows = read_table_csv(out / "checks.csv")
    names = {r["name"] for r in rows}
    assert {"duality", "energy_identity", "fd_gradient_best", "fd_hessian"} <= names
    assert all(r["passed"] == "true" for r in rows)
    deriv = json.loads((out / "derivative.json").read_text())
    assert math.isfinite(deriv["first_deriv"])


def test_cli_sweep_is_byte_reproducible(tmp_path):
    args = ["sweep", "--set", "sweep.mu_max=0.1", "--set", "sweep.mu_min=0.01", "--set", "sweep.points=3",
            "--set", "sweep.min_n=65", "--set", "optimizer.restarts=1"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run([*args, "--out", str(a)]) == 0
    assert run([*args, "--out", str(b)]) == 0
    csvs = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert len(csvs) >= 5
    for rel in csvs:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
    slope = json.loads((a / "slope.json").read_text())
    assert slope["slope_status"] == "ok" and slope["points"] == 3
