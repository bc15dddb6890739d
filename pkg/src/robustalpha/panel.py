"""Panel containers, factor projections and the classical OLS alpha path.

Conventions: a :class:`ReturnPanel` stores returns fund-by-period (``N x T``),
while residual panels produced here are period-by-fund (``T x N``) so that row
``t`` is the cross-sectional vector at time ``t``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateOmega,
    MalformedCSV,
    MissingData,
    SingularGram,
    ZeroResidualVariance,
)

GRAM_COND_LIMIT = 1e12
OMEGA_FLOOR = 1e-8
SIGMA_FLOOR = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ReturnPanel:
    """Fund returns, ``values[i, t]`` for fund ``i`` in period ``t``.

    Missing observations are stored as NaN. Estimation routines refuse
    panels with missing cells; use :meth:`complete_funds` / :meth:`subset`
    to carve out a complete sub-panel first.
    """

    values: np.ndarray
    fund_ids: tuple = ()
    periods: tuple = ()

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise ValueError(f"returns must be a 2-d array, got shape {v.shape}")
        n, t = v.shape
        if n < 2:
            raise ValueError(f"need at least 2 funds, got {n}")
        if np.isinf(v).any():
            raise ValueError("returns contain infinite entries")
        ids = tuple(str(i) for i in self.fund_ids) or tuple(f"fund{i}" for i in range(n))
        per = tuple(str(p) for p in self.periods) or tuple(str(k) for k in range(t))
        if len(ids) != n:
            raise ValueError(f"{len(ids)} fund ids for {n} funds")
        if len(per) != t:
            raise ValueError(f"{len(per)} period labels for {t} periods")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "fund_ids", ids)
        object.__setattr__(self, "periods", per)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t(self) -> int:
        return self.values.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def require_complete(self):
        if self.has_missing:
            bad = np.flatnonzero(np.isnan(self.values).any(axis=1))
            names = ", ".join(self.fund_ids[i] for i in bad[:5])
            raise MissingData(f"{bad.size} fund(s) have missing returns (e.g. {names})")

    def window(self, start: int, stop: int) -> "ReturnPanel":
        return ReturnPanel(self.values[:, start:stop], self.fund_ids, self.periods[start:stop])

    def complete_funds(self) -> np.ndarray:
        """Indices of funds with no missing value in this panel."""
        return np.flatnonzero(~np.isnan(self.values).any(axis=1))

    def subset(self, idx) -> "ReturnPanel":
        idx = np.asarray(idx, dtype=int)
        return ReturnPanel(self.values[idx], [self.fund_ids[i] for i in idx], self.periods)


@dataclass(frozen=True)
class FactorPanel:
    """Observable factor realizations, ``values[t, j]``."""

    values: np.ndarray
    names: tuple = ()
    periods: tuple = ()

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim == 1:
            v = _frozen(v[:, None])
        if v.ndim != 2:
            raise ValueError(f"factors must be a 2-d array, got shape {v.shape}")
        t, p = v.shape
        if p < 1:
            raise ValueError("need at least one factor")
        if not np.isfinite(v).all():
            raise ValueError("factors contain non-finite entries")
        names = tuple(str(x) for x in self.names) or tuple(f"f{j + 1}" for j in range(p))
        if len(names) != p:
            raise ValueError(f"{len(names)} factor names for {p} factors")
        per = tuple(str(x) for x in self.periods) or tuple(str(k) for k in range(t))
        if len(per) != t:
            raise ValueError(f"{len(per)} period labels for {t} periods")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "periods", per)

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def window(self, start: int, stop: int) -> "FactorPanel":
        return FactorPanel(self.values[start:stop], self.names, self.periods[start:stop])


@dataclass(frozen=True)
class ProjectionContext:
    """Annihilators against the factor span and derived scalars.

    ``m_f`` removes span(f); ``m_f_tilde`` removes span([1, f]).
    ``vartheta`` equals ``m_f @ 1`` and ``omega_t`` its sum.
    """

    m_f: np.ndarray
    m_f_tilde: np.ndarray
    omega_t: float
    vartheta: np.ndarray

    @property
    def t(self) -> int:
        return self.m_f.shape[0]


@dataclass(frozen=True)
class OlsAlphaFit:
    alpha_hat: np.ndarray
    residual_panel: np.ndarray
    sigma_hat: np.ndarray
    t_stats: np.ndarray


def _annihilator(x: np.ndarray) -> np.ndarray:
    # I - X (X'X)^{-1} X' via a thin QR of X
    q, _ = np.linalg.qr(x, mode="reduced")
    m = -q @ q.T
    m[np.diag_indices_from(m)] += 1.0
    return 0.5 * (m + m.T)


def build_projection(factors: FactorPanel) -> ProjectionContext:
    f = factors.values
    t, p = f.shape
    if t <= p:
        raise SingularGram(f"need more periods than factors (T={t}, p={p})")
    gram = f.T @ f
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > GRAM_COND_LIMIT:
        raise SingularGram(f"factor Gram matrix is numerically singular (cond={cond:.3g})")
    m_f = _annihilator(f)
    vartheta = m_f.sum(axis=1)
    omega = float(vartheta.sum())
    if omega <= OMEGA_FLOOR * t:
        raise DegenerateOmega(
            f"1'M_F 1 = {omega:.3g} <= {OMEGA_FLOOR:g}*T; factor span contains the constant"
        )
    m_f_tilde = _annihilator(np.column_stack([np.ones(t), f]))
    return ProjectionContext(_frozen(m_f), _frozen(m_f_tilde), omega, _frozen(vartheta))


def _check_alignment(panel: ReturnPanel, ctx: ProjectionContext):
    if panel.t != ctx.t:
        raise ValueError(f"panel has {panel.t} periods but factors have {ctx.t}")


def residualize(panel: ReturnPanel, ctx: ProjectionContext) -> np.ndarray:
    """``Z = M_F Y'`` as a ``T x N`` array."""
    _check_alignment(panel, ctx)
    panel.require_complete()
    return ctx.m_f @ panel.values.T


def fit_ols_alpha(panel: ReturnPanel, ctx: ProjectionContext, factors: FactorPanel) -> OlsAlphaFit:
    """OLS intercepts and their t-statistics.

    ``sigma_hat`` uses divisor ``T`` (not ``T - p - 1``), so the t-statistics
    are slightly inflated in small samples relative to the textbook version.
    """
    _check_alignment(panel, ctx)
    if factors.t != ctx.t:
        raise ValueError("factors and projection context disagree on T")
    panel.require_complete()
    y = panel.values
    z = ctx.m_f @ y.T
    alpha = z.sum(axis=0) / ctx.omega_t
    resid = y @ ctx.m_f_tilde
    sigma = np.sqrt(np.einsum("it,it->i", resid, resid) / panel.t)
    bad = np.flatnonzero(sigma < SIGMA_FLOOR)
    if bad.size:
        raise ZeroResidualVariance(
            f"{bad.size} fund(s) have zero residual variance (first: {panel.fund_ids[bad[0]]})",
            alpha_hat=alpha,
            funds=[panel.fund_ids[i] for i in bad],
        )
    t_stats = math.sqrt(ctx.omega_t) * alpha / sigma
    return OlsAlphaFit(_frozen(alpha), _frozen(z), _frozen(sigma), _frozen(t_stats))


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _read_rows(path):
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    rows = [r for r in rows if r and not (len(r) == 1 and not r[0].strip())]
    rows = [r for r in rows if not r[0].lstrip().startswith("#")]
    if not rows:
        raise MalformedCSV("file is empty", path=path)
    header = [h.strip() for h in rows[0]]
    if header[0].lower() != "period":
        raise MalformedCSV("first column must be 'period'", path=path, row=1, column=header[0])
    if len(set(header)) != len(header):
        raise MalformedCSV("duplicate column names", path=path, row=1)
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise MalformedCSV(
                f"ragged row: expected {len(header)} fields, found {len(r)}", path=path, row=k
            )
    return path, header, rows[1:]


def _parse_cell(text, path, row, column, allow_missing):
    s = text.strip()
    if s == "" or s.lower() in ("nan", "na"):
        if allow_missing:
            return math.nan
        raise MalformedCSV("missing value", path=path, row=row, column=column)
    try:
        x = float(s)
    except ValueError:
        raise MalformedCSV(f"not a number: {s!r}", path=path, row=row, column=column) from None
    if not math.isfinite(x):
        raise MalformedCSV(f"non-finite value: {s!r}", path=path, row=row, column=column)
    return x


def _parse_table(path, header, body, allow_missing):
    out = np.empty((len(body), len(header) - 1))
    for k, r in enumerate(body):
        for j, cell in enumerate(r[1:]):
            out[k, j] = _parse_cell(cell, path, k + 2, header[j + 1], allow_missing)
    periods = [r[0].strip() for r in body]
    if len(set(periods)) != len(periods):
        raise MalformedCSV("duplicate period labels", path=path)
    return periods, out


def read_returns_csv(path) -> ReturnPanel:
    """Read a ``period,<fund_1>,...,<fund_N>`` file; empty cells become NaN."""
    path, header, body = _read_rows(path)
    if len(header) < 3:
        raise MalformedCSV("need at least two fund columns", path=path, row=1)
    periods, values = _parse_table(path, header, body, allow_missing=True)
    return ReturnPanel(values.T, header[1:], periods)


def read_factors_csv(path):
    """Read a factor file.

    Returns ``(FactorPanel, riskfree)``; a column named ``rf`` is split off as
    the risk-free series (``None`` if absent).
    """
    path, header, body = _read_rows(path)
    periods, values = _parse_table(path, header, body, allow_missing=False)
    names = header[1:]
    lower = [n.lower() for n in names]
    rf = None
    if "rf" in lower:
        j = lower.index("rf")
        rf = values[:, j].copy()
        values = np.delete(values, j, axis=1)
        names = names[:j] + names[j + 1:]
    if not names:
        raise MalformedCSV("no factor columns besides rf", path=path, row=1)
    return FactorPanel(values, names, periods), rf


def read_benchmark_csv(path):
    """Read ``period,return``; returns ``(periods, returns)``."""
    path, header, body = _read_rows(path)
    if len(header) != 2:
        raise MalformedCSV("benchmark file must have exactly two columns", path=path, row=1)
    periods, values = _parse_table(path, header, body, allow_missing=False)
    return periods, values[:, 0]


def align_periods(panel: ReturnPanel, factors: FactorPanel, riskfree=None):
    """Restrict panel and factors to their common periods (panel order)."""
    common = [p for p in panel.periods if p in set(factors.periods)]
    if not common:
        raise ValueError("returns and factors share no periods")
    pi = {p: k for k, p in enumerate(panel.periods)}
    fi = {p: k for k, p in enumerate(factors.periods)}
    ip = [pi[p] for p in common]
    jf = [fi[p] for p in common]
    panel2 = ReturnPanel(panel.values[:, ip], panel.fund_ids, common)
    fac2 = FactorPanel(factors.values[jf], factors.names, common)
    rf2 = None if riskfree is None else np.asarray(riskfree)[jf]
    return panel2, fac2, rf2


def write_returns_csv(path, panel: ReturnPanel, header_lines: Sequence[str] = ()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period", *panel.fund_ids])
        for t, per in enumerate(panel.periods):
            w.writerow([per, *("" if np.isnan(x) else repr(float(x)) for x in panel.values[:, t])])


def write_factors_csv(path, factors: FactorPanel, riskfree=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = list(factors.names) + (["rf"] if riskfree is not None else [])
        w.writerow(["period", *names])
        for t, per in enumerate(factors.periods):
            row = [repr(float(x)) for x in factors.values[t]]
            if riskfree is not None:
                row.append(repr(float(riskfree[t])))
            w.writerow([per, *row])
