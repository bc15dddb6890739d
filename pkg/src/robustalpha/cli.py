"""Command line entry point: ``robustalpha {simulate,test,backtest,factors}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags, invalid
parameter values, malformed input files). Option precedence is
flags > ``--config`` JSON file > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import warnings

import numpy as np

from . import backtest as bt
from . import latent, simulation
from .errors import InsufficientHistory, MalformedCSV, RobustAlphaError
from .multitest import LatentSource, Method, ProcedureOptions, run_procedure
from .panel import (
    ReturnPanel,
    align_periods,
    build_projection,
    read_benchmark_csv,
    read_factors_csv,
    read_returns_csv,
)


class UsageError(Exception):
    pass


# keys that name output locations; left out of the emitted configuration so
# that reruns into different files stay byte-identical
_OUTPUT_KEYS = ("out", "log", "config", "threads")

DEFAULTS = {
    "simulate": {
        "scenario": "I", "error": "normal", "n": 200, "t": 120, "rho": 0.5,
        "delta": 0.48, "delta_grid": None, "rho_grid": None, "pi0": 0.1,
        "gamma": 0.1, "reps": 100, "seed": None, "kappa": 0.8,
        "methods": "dbh,ssbh,fbh,fssbh", "k_max": latent.DEFAULT_K_MAX,
        "latent_source": "residual", "out": "simulation.csv", "threads": None,
    },
    "test": {
        "returns": None, "factors": None, "method": "fssbh", "gamma": 0.1,
        "k_max": latent.DEFAULT_K_MAX, "latent_source": "residual",
        "format": "json", "out": None,
    },
    "backtest": {
        "returns": None, "factors": None, "benchmark": None, "window": 120,
        "hold": 6, "gamma": 0.1, "method": "fssbh", "empty_policy": "cash",
        "k_max": latent.DEFAULT_K_MAX, "latent_source": "residual",
        "out": "netvalue.csv", "log": None,
    },
    "factors": {
        "returns": None, "factors": None, "k_max": latent.DEFAULT_K_MAX,
        "out": None,
    },
}


def _grid(text):
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def build_parser() -> argparse.ArgumentParser:
    sup = argparse.SUPPRESS
    p = argparse.ArgumentParser(prog="robustalpha", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo FDP/TDP study", argument_default=sup)
    s.add_argument("--config")
    s.add_argument("--scenario", choices=["I", "II", "III"])
    s.add_argument("--error", choices=["normal", "t3", "mixnormal", "icm"], type=str.lower)
    s.add_argument("--n", type=int)
    s.add_argument("--t", type=int)
    s.add_argument("--rho", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--delta-grid", type=_grid, help="comma-separated delta values")
    s.add_argument("--rho-grid", type=_grid, help="comma-separated rho values")
    s.add_argument("--pi0", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--kappa", type=float)
    s.add_argument("--methods", help="comma-separated subset of dbh,ssbh,fbh,fssbh")
    s.add_argument("--k-max", type=int)
    s.add_argument("--latent-source", choices=["residual", "projected"])
    s.add_argument("--threads", type=int)
    s.add_argument("--out")

    t = sub.add_parser("test", help="screen funds in a returns file", argument_default=sup)
    t.add_argument("--config")
    t.add_argument("--returns")
    t.add_argument("--factors")
    t.add_argument("--method", type=str.lower)
    t.add_argument("--gamma", type=float)
    t.add_argument("--k-max", type=int)
    t.add_argument("--latent-source", choices=["residual", "projected"])
    t.add_argument("--format", choices=["json", "csv"])
    t.add_argument("--out")

    b = sub.add_parser("backtest", help="rolling-window selection backtest", argument_default=sup)
    b.add_argument("--config")
    b.add_argument("--returns")
    b.add_argument("--factors")
    b.add_argument("--benchmark")
    b.add_argument("--window", type=int)
    b.add_argument("--hold", type=int)
    b.add_argument("--gamma", type=float)
    b.add_argument("--method", type=str.lower)
    b.add_argument("--empty-policy", choices=["cash", "benchmark"])
    b.add_argument("--k-max", type=int)
    b.add_argument("--latent-source", choices=["residual", "projected"])
    b.add_argument("--out")
    b.add_argument("--log", help="selection log JSON (default: <out>.selections.json)")

    f = sub.add_parser("factors", help="Kendall's tau spectrum and factor count", argument_default=sup)
    f.add_argument("--config")
    f.add_argument("--returns")
    f.add_argument("--factors", help="optional; residualize on these factors first")
    f.add_argument("--k-max", type=int)
    f.add_argument("--out")
    return p


def resolve(command: str, flags: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    path = flags.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                filecfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {path}: {exc}") from None
        if not isinstance(filecfg, dict):
            raise UsageError("config file must hold a JSON object")
        filecfg = {k.replace("-", "_"): v for k, v in filecfg.items()}
        unknown = sorted(set(filecfg) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        cfg.update(filecfg)
    cfg.update(flags)
    return cfg


def _public(cfg):
    return {k: v for k, v in sorted(cfg.items()) if k not in _OUTPUT_KEYS}


def _require(cfg, *keys):
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _options(cfg):
    try:
        return ProcedureOptions(k_max=int(cfg["k_max"]), latent_source=LatentSource(cfg["latent_source"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _method(name):
    try:
        return Method.parse(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_inputs(cfg):
    returns = read_returns_csv(cfg["returns"])
    factors, rf = read_factors_csv(cfg["factors"])
    return align_periods(returns, factors, rf)


def cmd_simulate(cfg) -> int:
    drawn = cfg["seed"] is None
    if drawn:
        cfg["seed"] = secrets.randbits(63)
    if cfg["delta_grid"] is not None and cfg["rho_grid"] is not None:
        raise UsageError("give at most one of --delta-grid and --rho-grid")
    methods = [_method(m) for m in str(cfg["methods"]).split(",") if m.strip()]
    if not methods:
        raise UsageError("--methods is empty")
    cfg["methods"] = ",".join(m.value.lower() for m in methods)
    try:
        sc = simulation.ScenarioConfig(
            scenario=cfg["scenario"], error_law=cfg["error"], n=int(cfg["n"]), t=int(cfg["t"]),
            rho=float(cfg["rho"]), delta=float(cfg["delta"]), pi0=float(cfg["pi0"]),
            gamma=float(cfg["gamma"]), reps=int(cfg["reps"]), seed=int(cfg["seed"]),
            kappa=float(cfg["kappa"]),
        )
        if cfg["rho_grid"] is not None:
            for r in cfg["rho_grid"]:
                if not 0 < r < 1:
                    raise ValueError(f"rho must lie in (0, 1), got {r}")
            sweep = {"rho": list(cfg["rho_grid"])}
        elif cfg["delta_grid"] is not None:
            for d in cfg["delta_grid"]:
                if d < 0:
                    raise ValueError(f"delta must be >= 0, got {d}")
            sweep = {"delta": list(cfg["delta_grid"])}
        else:
            sweep = {"delta": [sc.delta]}
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    opts = _options(cfg)
    if drawn:
        print(f"seed: {cfg['seed']}")
    threads = cfg["threads"] or os.cpu_count() or 1
    table = simulation.run_sweep(sc, methods, sweep, opts, n_jobs=int(threads))
    header = ["config: " + json.dumps(_public(cfg), sort_keys=True)]
    simulation.write_sweep_csv(table, cfg["out"], header)
    with_pd = table[["method", "grid_var", "grid_value", "mean_fdp", "mean_tdp", "failures"]]
    print(with_pd.to_string(index=False, float_format=lambda x: f"{x:.4f}"))
    print(f"wrote {cfg['out']}")
    return 0


def cmd_test(cfg) -> int:
    _require(cfg, "returns", "factors")
    method = _method(cfg["method"])
    cfg["method"] = method.value.lower()
    panel, factors, rf = _load_inputs(cfg)
    complete = panel.complete_funds()
    if complete.size < panel.n:
        dropped = panel.n - complete.size
        print(f"dropping {dropped} fund(s) with missing returns", file=sys.stderr)
        panel = panel.subset(complete)
    if rf is not None:
        panel = ReturnPanel(panel.values - rf[None, :], panel.fund_ids, panel.periods)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_procedure(method, panel, factors, float(cfg["gamma"]), _options(cfg))
    doc = report.to_dict()
    doc["config"] = _public(cfg)
    doc["rejected_ids"] = report.rejected_ids
    if cfg["out"]:
        if cfg["format"] == "json":
            with open(cfg["out"], "w") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
        else:
            with open(cfg["out"], "w") as fh:
                fh.write("# config: " + json.dumps(_public(cfg), sort_keys=True) + "\n")
                fh.write(f"# method={report.method.value} gamma={report.gamma!r} k_hat={report.k_hat}\n")
                fh.write("fund_id,statistic,p_value,rejected\n")
                for fid, s, pv, r in zip(report.fund_ids, report.statistics, report.p_values, report.rejected):
                    fh.write(f"{fid},{float(s)!r},{float(pv)!r},{int(r)}\n")
    print(f"method: {report.method.value}  k_hat: {report.k_hat}")
    if "r_hat" in report.diagnostics:
        print(f"r_hat: {report.diagnostics['r_hat']}")
    print("rejected: " + (", ".join(report.rejected_ids) or "(none)"))
    return 0


def cmd_backtest(cfg) -> int:
    _require(cfg, "returns", "factors")
    name = str(cfg["method"]).lower()
    if name != "sharpe":
        name = _method(name).value.lower()
    cfg["method"] = name
    try:
        bcfg = bt.BacktestConfig(
            window_l=int(cfg["window"]), hold=int(cfg["hold"]), gamma=float(cfg["gamma"]),
            method=name, min_funds_fallback=cfg["empty_policy"], options=_options(cfg),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    panel, factors, rf = _load_inputs(cfg)
    bench = None
    if cfg["benchmark"]:
        periods, values = read_benchmark_csv(cfg["benchmark"])
        lookup = dict(zip(periods, values))
        missing = [p for p in panel.periods if p not in lookup]
        if missing:
            raise UsageError(f"benchmark lacks {len(missing)} period(s), first {missing[0]}")
        bench = np.array([lookup[p] for p in panel.periods])
    if bcfg.min_funds_fallback is bt.EmptyPolicy.BENCHMARK and bench is None:
        raise UsageError("--empty-policy benchmark requires --benchmark")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curve = bt.rolling_backtest(panel, factors, bench, bcfg, riskfree=rf)
    public = _public(cfg)
    curve.to_csv(cfg["out"], ["config: " + json.dumps(public, sort_keys=True)])
    log = cfg["log"] or os.path.splitext(cfg["out"])[0] + ".selections.json"
    curve.write_selection_log(log, public)
    print(f"rebalances: {len(curve.selections)}  terminal net value: {curve.net_value[-1]:.6f}")
    if curve.benchmark_net_value is not None:
        print(f"benchmark terminal net value: {curve.benchmark_net_value[-1]:.6f}")
    print(f"wrote {cfg['out']} and {log}")
    return 0


def cmd_factors(cfg) -> int:
    _require(cfg, "returns")
    panel = read_returns_csv(cfg["returns"])
    if cfg["factors"]:
        factors, rf = read_factors_csv(cfg["factors"])
        panel, factors, rf = align_periods(panel, factors, rf)
    panel = panel.subset(panel.complete_funds())
    y = panel.values.T
    if cfg["factors"]:
        y = build_projection(factors).m_f_tilde @ y
    kt = latent.kendall_tau(y)
    lam = np.linalg.eigvalsh(kt.k)[::-1]
    k_max = min(int(cfg["k_max"]), lam.size - 1)
    r_hat = latent.select_factor_count(lam, k_max)
    floored = np.maximum(lam[: k_max + 1], latent.EIGEN_FLOOR)
    doc = {
        "config": _public(cfg),
        "n_funds": panel.n,
        "n_periods": panel.t,
        "r_hat": r_hat,
        "eigenvalues": [float(x) for x in lam[: k_max + 1]],
        "ratios": [float(x) for x in floored[:-1] / floored[1:]],
        "cumulative_share": [float(x) for x in np.cumsum(lam)[: k_max + 1] / lam.sum()],
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


COMMANDS = {"simulate": cmd_simulate, "test": cmd_test, "backtest": cmd_backtest, "factors": cmd_factors}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    try:
        cfg = resolve(command, args)
        return COMMANDS[command](cfg)
    except (UsageError, MalformedCSV) as exc:
        print(f"robustalpha {command}: error: {exc}", file=sys.stderr)
        return 2
    except InsufficientHistory as exc:
        print(f"robustalpha {command}: {exc} (required {exc.required}, available {exc.available})",
              file=sys.stderr)
        return 1
    except (RobustAlphaError, ValueError, OSError) as exc:
        print(f"robustalpha {command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
