"""Rolling-window fund selection and equal-weight fund-of-funds accounting.

At each rebalance date the trailing ``window_l`` months are used to select
funds (a multiple-testing procedure on factor-model alphas, or the Sharpe
ratio rule); the selected funds are bought in equal weights and held for
``hold`` months, then the selection is redone.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import EmptyUniverse, InsufficientHistory
from .multitest import Method, ProcedureOptions, run_procedure
from .panel import FactorPanel, ReturnPanel

SHARPE = "SHARPE"


class EmptyPolicy(str, Enum):
    CASH = "cash"
    BENCHMARK = "benchmark"


@dataclass(frozen=True)
class BacktestConfig:
    window_l: int = 120
    hold: int = 6
    gamma: float = 0.1
    method: str = "FSSBH"
    min_funds_fallback: EmptyPolicy = EmptyPolicy.CASH
    options: ProcedureOptions = field(default_factory=ProcedureOptions)

    def __post_init__(self):
        m = str(self.method).upper().replace("-", "").replace("_", "")
        if m != SHARPE:
            m = Method.parse(m).value
        object.__setattr__(self, "method", m)
        object.__setattr__(self, "min_funds_fallback", EmptyPolicy(self.min_funds_fallback))
        if self.window_l < 36:
            raise ValueError(f"window must be at least 36 months, got {self.window_l}")
        if self.hold < 1:
            raise ValueError(f"hold must be at least 1 month, got {self.hold}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")


@dataclass(frozen=True)
class Rebalance:
    period: str
    universe: int
    selected: tuple
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NetValueCurve:
    periods: tuple
    net_value: np.ndarray
    selections: tuple
    per_period_return: np.ndarray
    n_selected: np.ndarray
    benchmark_net_value: np.ndarray | None = None

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["period", "net_value", "n_selected"])
            for per, nv, k in zip(self.periods, self.net_value, self.n_selected):
                w.writerow([per, repr(float(nv)), int(k)])

    def selection_log(self) -> list:
        return [
            {"period": r.period, "universe": r.universe, "selected": list(r.selected),
             "diagnostics": r.diagnostics}
            for r in self.selections
        ]

    def write_selection_log(self, path, config=None):
        doc = {"config": config or {}, "rebalances": self.selection_log()}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def sharpe_ratios(excess: np.ndarray) -> np.ndarray:
    """Annualized Sharpe ratio per row of monthly excess returns (NaN when volatility is zero)."""
    excess = np.asarray(excess, dtype=float)
    mean = excess.mean(axis=1)
    sd = excess.std(axis=1, ddof=1)
    out = np.full(mean.shape, np.nan)
    ok = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
    out[ok] = mean[ok] / sd[ok] * math.sqrt(12.0)
    return out


def sharpe_select(window: ReturnPanel, riskfree=None, threshold: float = 1.0) -> list:
    """Ids of funds whose annualized Sharpe ratio over ``window`` exceeds ``threshold``.

    Zero-volatility funds are never selected.
    """
    window.require_complete()
    rf = np.zeros(window.t) if riskfree is None else np.asarray(riskfree, dtype=float)
    sr = sharpe_ratios(window.values - rf[None, :])
    return [window.fund_ids[i] for i in np.flatnonzero(np.nan_to_num(sr, nan=-np.inf) > threshold)]


def rebalance_schedule(t_total: int, window_l: int, hold: int) -> list:
    """``(start, stop)`` index pairs of holding blocks; the last block may be shorter."""
    if t_total < window_l + hold:
        raise InsufficientHistory(window_l + hold, t_total)
    return [(s, min(s + hold, t_total)) for s in range(window_l, t_total, hold)]


def _select(returns, factors, rf, start, cfg):
    lo = start - cfg.window_l
    window = returns.window(lo, start)
    keep = window.complete_funds()
    if keep.size == 0:
        raise EmptyUniverse(f"no fund has complete data over {window.periods[0]}..{window.periods[-1]}")
    window = window.subset(keep) if keep.size < returns.n else window
    rf_win = None if rf is None else rf[lo:start]
    if cfg.method == SHARPE:
        return window.n, sharpe_select(window, rf_win), {}
    if window.n < 2:
        return window.n, [], {"skipped": "fewer than two complete funds"}
    excess = window.values if rf_win is None else window.values - rf_win[None, :]
    panel = ReturnPanel(excess, window.fund_ids, window.periods)
    report = run_procedure(cfg.method, panel, factors.window(lo, start), cfg.gamma, cfg.options)
    diag = {"k_hat": report.k_hat}
    for key in ("r_hat", "converged", "varsigma"):
        if key in report.diagnostics:
            diag[key] = report.diagnostics[key]
    return window.n, report.rejected_ids, diag


def rolling_backtest(returns: ReturnPanel, factors: FactorPanel, benchmark=None,
                     cfg: BacktestConfig | None = None, riskfree=None) -> NetValueCurve:
    """Simulate the rolling selection strategy.

    ``returns`` are gross monthly fund returns (NaN = missing) aligned by row
    with ``factors``; ``riskfree`` (optional) is subtracted before testing
    alphas or computing Sharpe ratios. Within a block the portfolio is
    buy-and-hold from equal weights; a fund with a missing month is dropped
    from that month on and the remaining weights are renormalized. A block
    with no selected fund earns 0 (``cash``) or the benchmark return.
    """
    cfg = cfg or BacktestConfig()
    if returns.t != factors.t:
        raise ValueError(f"returns have {returns.t} periods, factors {factors.t}")
    rf = None if riskfree is None else np.asarray(riskfree, dtype=float)
    bench = None if benchmark is None else np.asarray(benchmark, dtype=float)
    for name, arr in (("riskfree", rf), ("benchmark", bench)):
        if arr is not None and arr.shape != (returns.t,):
            raise ValueError(f"{name} series must have {returns.t} entries")
    if bench is None and cfg.min_funds_fallback is EmptyPolicy.BENCHMARK:
        raise ValueError("benchmark fallback requested without a benchmark series")

    blocks = rebalance_schedule(returns.t, cfg.window_l, cfg.hold)
    held = returns.values[:, blocks[0][0]:]
    if (held < -1.0).any():
        i, m = np.argwhere(held < -1.0)[0]
        raise ValueError(f"return of {returns.fund_ids[i]} at {returns.periods[blocks[0][0] + m]} "
                         f"is below -100%; returns must be simple decimal returns")
    index = {fid: i for i, fid in enumerate(returns.fund_ids)}
    port = []
    counts = []
    log = []
    for start, stop in blocks:
        universe, chosen, diag = _select(returns, factors, rf, start, cfg)
        log.append(Rebalance(returns.periods[start], universe, tuple(chosen), diag))
        rows = np.array([index[c] for c in chosen], dtype=int)
        weights = np.full(rows.size, 1.0 / rows.size) if rows.size else np.zeros(0)
        for m in range(start, stop):
            if rows.size == 0:
                r_p = 0.0 if cfg.min_funds_fallback is EmptyPolicy.CASH else float(bench[m])
                port.append(r_p)
                counts.append(0)
                continue
            r = returns.values[rows, m]
            alive = ~np.isnan(r)
            if not alive.any():
                rows = rows[:0]
                port.append(0.0 if cfg.min_funds_fallback is EmptyPolicy.CASH else float(bench[m]))
                counts.append(0)
                continue
            rows, weights, r = rows[alive], weights[alive], r[alive]
            weights = weights / weights.sum()
            r_p = float(weights @ r)
            port.append(r_p)
            counts.append(int(rows.size))
            grown = weights * (1.0 + r)
            weights = grown / grown.sum() if grown.sum() > 0 else np.full(rows.size, 1.0 / rows.size)

    port = np.asarray(port)
    net = np.concatenate([[1.0], np.cumprod(1.0 + port)])
    first = blocks[0][0]
    periods = (returns.periods[first - 1],) + returns.periods[first:blocks[-1][1]]
    bench_nv = None
    if bench is not None:
        bench_nv = np.concatenate([[1.0], np.cumprod(1.0 + bench[first:blocks[-1][1]])])
    n_sel = np.concatenate([[0], counts]).astype(int)
    return NetValueCurve(periods, net, tuple(log), port, n_sel, bench_nv)


def equal_weight_curve(returns: ReturnPanel, start: int, stop: int | None = None) -> np.ndarray:
    """Net value of the monthly-rebalanced equal-weight portfolio of all available funds."""
    stop = returns.t if stop is None else stop
    block = returns.values[:, start:stop]
    r = np.nanmean(np.where(np.isnan(block).all(axis=0, keepdims=True), 0.0, block), axis=0)
    return np.concatenate([[1.0], np.cumprod(1.0 + r)])
