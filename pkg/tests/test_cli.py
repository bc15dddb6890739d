import json
import subprocess
import sys

import numpy as np
import pytest

from robustalpha.backtest import BacktestConfig, rolling_backtest
from robustalpha.cli import DEFAULTS, main, resolve
from robustalpha.panel import FactorPanel, ReturnPanel, read_factors_csv, read_returns_csv
from robustalpha.panel import write_factors_csv, write_returns_csv


def write_inputs(tmp_path, n=30, t=150, latent=0.0, seed=0, n_skilled=4):
    rng = np.random.default_rng(seed)
    periods = [f"{2000 + m // 12}-{m % 12 + 1:02d}" for m in range(t)]
    f = rng.normal(0.006, 0.04, (t, 3))
    rf = np.full(t, 0.002)
    beta = rng.uniform(0.3, 1.3, (n, 3))
    alpha = np.zeros(n)
    alpha[:n_skilled] = 0.015
    w = rng.standard_normal(t) * latent
    y = rf + alpha[:, None] + beta @ f.T + np.outer(rng.uniform(0.5, 1.5, n), w)
    y = y + 0.02 * rng.standard_normal((n, t))
    ids = [f"F{i:02d}" for i in range(n)]
    write_returns_csv(tmp_path / "returns.csv", ReturnPanel(y, ids, periods))
    write_factors_csv(tmp_path / "factors.csv", FactorPanel(f, ["mktrf", "smb", "hml"], periods), rf)
    with open(tmp_path / "bench.csv", "w") as fh:
        fh.write("period,return\n")
        for p, r in zip(periods, f[:, 0] + rf):
            fh.write(f"{p},{float(r)!r}\n")
    return tmp_path


def test_defaults_match_design():
    d = DEFAULTS["simulate"]
    assert (d["n"], d["pi0"], d["gamma"]) == (200, 0.1, 0.1)
    b = DEFAULTS["backtest"]
    assert (b["window"], b["hold"], b["gamma"]) == (120, 6, 0.1)


def test_config_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 80, "reps": 3, "k-max": 4}))
    cfg = resolve("simulate", {"config": str(path), "reps": 7})
    assert (cfg["n"], cfg["reps"], cfg["k_max"], cfg["t"]) == (80, 7, 4, 120)


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(path), "--seed", "1"]) == 2
    assert "bogus" in capsys.readouterr().err


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--scenario", "I", "--error", "normal", "--n", "50", "--t", "60",
            "--reps", "5", "--seed", "1", "--threads", "1"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    header = a.decode().splitlines()[0]
    assert header.startswith("# config: ") and '"seed": 1' in header


def test_simulate_bad_rho(capsys):
    assert main(["simulate", "--rho", "1.5"]) == 2
    err = capsys.readouterr().err
    assert "rho" in err and "(0, 1)" in err


def test_simulate_bad_flag():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--nope"])
    assert exc.value.code == 2


def test_simulate_random_seed_printed(tmp_path, capsys):
    assert main(["simulate", "--n", "40", "--t", "30", "--reps", "1", "--methods", "dbh",
                 "--out", str(tmp_path / "s.csv")]) == 0
    out = capsys.readouterr().out
    seed = int(out.split("seed: ")[1].split()[0])
    assert f'"seed": {seed}' in (tmp_path / "s.csv").read_text()


def test_simulate_grid(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["simulate", "--n", "40", "--t", "30", "--reps", "1", "--seed", "2",
                 "--methods", "dbh", "--delta-grid", "0,0.24", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()[2:]
    assert [r.split(",")[4] for r in rows] == ["0.0", "0.24"]


def test_test_command_json(tmp_path, capsys):
    write_inputs(tmp_path)
    out = tmp_path / "r.json"
    assert main(["test", "--returns", str(tmp_path / "returns.csv"), "--factors",
                 str(tmp_path / "factors.csv"), "--method", "dbh", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["method"] == "DBH" and doc["config"]["method"] == "dbh"
    assert set(doc["rejected_ids"]) >= {"F00", "F01", "F02", "F03"}
    echoed = capsys.readouterr().out
    assert "DBH" in echoed and "F00" in echoed


def test_test_command_planted_factor(tmp_path):
    write_inputs(tmp_path, latent=0.08)
    out = tmp_path / "r.json"
    assert main(["test", "--returns", str(tmp_path / "returns.csv"), "--factors",
                 str(tmp_path / "factors.csv"), "--method", "fssbh", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["diagnostics"]["r_hat"] >= 1


def test_test_command_ragged(tmp_path, capsys):
    write_inputs(tmp_path)
    bad = tmp_path / "bad.csv"
    bad.write_text("period,A,B\n2000-01,0.1,0.2\n2000-02,0.1\n")
    assert main(["test", "--returns", str(bad), "--factors", str(tmp_path / "factors.csv")]) == 2
    assert "row 3" in capsys.readouterr().err


def test_test_command_missing_args(capsys):
    assert main(["test"]) == 2
    assert "--returns" in capsys.readouterr().err


def test_backtest_command(tmp_path):
    write_inputs(tmp_path, t=150)
    out = tmp_path / "nv.csv"
    assert main(["backtest", "--returns", str(tmp_path / "returns.csv"), "--factors",
                 str(tmp_path / "factors.csv"), "--benchmark", str(tmp_path / "bench.csv"),
                 "--window", "120", "--hold", "6", "--gamma", "0.1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert json.loads(lines[0][len("# config: "):])["window"] == 120
    assert lines[1] == "period,net_value,n_selected"
    assert len(lines) == 2 + 31
    log = json.loads((tmp_path / "nv.selections.json").read_text())
    assert len(log["rebalances"]) == 5


def test_backtest_short_panel(tmp_path, capsys):
    write_inputs(tmp_path, t=100)
    assert main(["backtest", "--returns", str(tmp_path / "returns.csv"), "--factors",
                 str(tmp_path / "factors.csv"), "--out", str(tmp_path / "nv.csv")]) == 1
    err = capsys.readouterr().err
    assert "required 126" in err and "available 100" in err


def test_backtest_sharpe_dispatch(tmp_path):
    write_inputs(tmp_path, t=80)
    out = tmp_path / "nv.csv"
    assert main(["backtest", "--returns", str(tmp_path / "returns.csv"), "--factors",
                 str(tmp_path / "factors.csv"), "--window", "60", "--method", "sharpe",
                 "--out", str(out)]) == 0
    panel = read_returns_csv(tmp_path / "returns.csv")
    factors, rf = read_factors_csv(tmp_path / "factors.csv")
    curve = rolling_backtest(panel, factors, cfg=BacktestConfig(60, 6, method="SHARPE"), riskfree=rf)
    nv = [float(line.split(",")[1]) for line in out.read_text().splitlines()[2:]]
    assert nv == curve.net_value.tolist()


def test_factors_command(tmp_path, capsys):
    write_inputs(tmp_path, latent=0.08)
    assert main(["factors", "--returns", str(tmp_path / "returns.csv"), "--factors",
                 str(tmp_path / "factors.csv"), "--k-max", "4"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["r_hat"] == 1
    assert len(doc["eigenvalues"]) == 5 and len(doc["ratios"]) == 4


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "robustalpha", "simulate", "--rho", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 2
