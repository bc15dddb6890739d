"""P-values, the Benjamini-Hochberg step-up rule and the four alpha-screening procedures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import erfc

from . import latent, spatial
from .errors import ProcedureError, RobustAlphaError
from .panel import FactorPanel, ReturnPanel, build_projection, fit_ols_alpha, residualize

STAT_CLAMP = 38.0


class Method(str, Enum):
    DBH = "DBH"
    SSBH = "SSBH"
    FBH = "FBH"
    FSSBH = "FSSBH"

    @classmethod
    def parse(cls, name) -> "Method":
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("-", "").replace("_", "")
        try:
            return cls[key]
        except KeyError:
            valid = ", ".join(m.value.lower() for m in cls)
            raise ValueError(f"unknown method {name!r}; expected one of {valid}") from None


ALL_METHODS = (Method.DBH, Method.SSBH, Method.FBH, Method.FSSBH)


class LatentSource(str, Enum):
    """Which residual panel the latent-factor loadings are estimated from.

    ``RESIDUAL`` uses ``M_[1,f] Y'`` (intercept removed, so fund alphas cannot
    masquerade as a latent factor); ``PROJECTED`` uses ``Z = M_F Y'``.
    """

    RESIDUAL = "residual"
    PROJECTED = "projected"


@dataclass(frozen=True)
class ProcedureOptions:
    k_max: int = latent.DEFAULT_K_MAX
    tol: float = 1e-8
    max_iters: int = 200
    latent_source: LatentSource = LatentSource.RESIDUAL

    def __post_init__(self):
        object.__setattr__(self, "latent_source", LatentSource(self.latent_source))
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class TestReport:
    method: Method
    statistics: np.ndarray
    p_values: np.ndarray
    rejected: np.ndarray
    k_hat: int
    gamma: float
    diagnostics: dict = field(default_factory=dict)
    fund_ids: tuple = ()

    __test__ = False  # not a pytest class

    @property
    def rejected_ids(self) -> list:
        return [self.fund_ids[i] for i in np.flatnonzero(self.rejected)]

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "gamma": self.gamma,
            "k_hat": self.k_hat,
            "fund_ids": list(self.fund_ids),
            "statistics": [float(x) for x in self.statistics],
            "p_values": [float(x) for x in self.p_values],
            "rejected": [bool(x) for x in self.rejected],
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass(frozen=True)
class EvalMetrics:
    fdp: float
    tdp: float
    n_reject: int
    n_true_nonnull: int


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, Enum):
        return obj.value
    return obj


def one_sided_p(statistics) -> np.ndarray:
    """Upper-tail normal p-values ``1 - Phi(T)``, via ``erfc`` to keep precision in the tail."""
    s = np.clip(np.asarray(statistics, dtype=float), -STAT_CLAMP, STAT_CLAMP)
    return 0.5 * erfc(s / math.sqrt(2.0))


def bh_reject(p_values, gamma: float):
    """Benjamini-Hochberg step-up at level ``gamma``.

    Returns ``(rejected, k_hat)``; every hypothesis with ``p <= p_(k_hat)``
    is rejected, so tied p-values at the cutoff are all rejected.
    """
    p = np.asarray(p_values, dtype=float)
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    n = p.size
    if n == 0:
        return np.zeros(0, dtype=bool), 0
    ps = np.sort(p)
    ok = np.flatnonzero(ps <= gamma * np.arange(1, n + 1) / n)
    if ok.size == 0:
        return np.zeros(n, dtype=bool), 0
    k_hat = int(ok[-1]) + 1
    return p <= ps[k_hat - 1], k_hat


def _sign_pipeline(z, ctx, big_t, opts, diag, prefix=""):
    fit = spatial.fit_spatial_median(z, tol=opts.tol, max_iters=opts.max_iters)
    diag[prefix + "iterations"] = fit.iterations
    diag[prefix + "converged"] = fit.converged
    diag[prefix + "skipped_rows"] = fit.skipped_rows
    scale = spatial.estimate_varsigma(z, fit, ctx.omega_t, big_t)
    diag[prefix + "varsigma"] = scale.varsigma
    return spatial.sign_statistics(fit, scale, big_t)


def _latent_input(panel, ctx, opts):
    if opts.latent_source is LatentSource.PROJECTED:
        return ctx.m_f @ panel.values.T
    return ctx.m_f_tilde @ panel.values.T


def _statistics(method, panel, factors, opts, diag):
    stage = "projection"
    try:
        ctx = build_projection(factors)
        diag["omega_t"] = ctx.omega_t
        big_t = panel.t
        k_max = min(opts.k_max, panel.n - 1, big_t - 2)
        if method is Method.DBH:
            stage = "ols"
            return fit_ols_alpha(panel, ctx, factors).t_stats
        if method is Method.SSBH:
            stage = "spatial_median"
            z = residualize(panel, ctx)
            return _sign_pipeline(z, ctx, big_t, opts, diag)
        if method is Method.FBH:
            stage = "ols"
            ols = fit_ols_alpha(panel, ctx, factors)
            stage = "pca"
            diag["k_max"] = k_max
            fit = latent.fit_pca(_latent_input(panel, ctx, opts), k_max)
            diag["r_hat"] = fit.r_hat
            diag["eigenvalues"] = fit.eigenvalues[: k_max + 1]
            stage = "fbh_statistics"
            return latent.fbh_statistics(ols, fit, ctx)
        stage = "elliptical"
        panel.require_complete()
        diag["k_max"] = k_max
        fit = latent.fit_elliptical(_latent_input(panel, ctx, opts), k_max)
        diag["r_hat"] = fit.r_hat
        diag["eigenvalues"] = fit.eigenvalues[: k_max + 1]
        stage = "factor_adjust"
        z_breve = latent.factor_adjust(panel, fit, ctx)
        stage = "spatial_median"
        return _sign_pipeline(z_breve, ctx, big_t, opts, diag)
    except RobustAlphaError as exc:
        diag["failed_stage"] = stage
        raise ProcedureError(method.value, stage, exc, diag) from exc


def run_procedure(method, panel: ReturnPanel, factors: FactorPanel, gamma: float = 0.1,
                  options: ProcedureOptions | None = None) -> TestReport:
    """Screen every fund for ``alpha > 0`` with one of D-BH, SS-BH, F-BH or FSS-BH.

    Stage failures are re-raised as :class:`ProcedureError`, which carries the
    diagnostics collected before the failing stage.
    """
    method = Method.parse(method)
    opts = options or ProcedureOptions()
    if panel.t != factors.t:
        raise ValueError(f"panel has {panel.t} periods, factors {factors.t}")
    diag: dict = {}
    stats = np.asarray(_statistics(method, panel, factors, opts, diag), dtype=float)
    p = one_sided_p(stats)
    rejected, k_hat = bh_reject(p, gamma)
    return TestReport(method, stats, p, rejected, k_hat, float(gamma), diag, panel.fund_ids)


def evaluate(report: TestReport, truth) -> EvalMetrics:
    """False and true discovery proportions of ``report`` against ``truth`` (alpha > 0)."""
    return discovery_proportions(report.rejected, truth)


def discovery_proportions(rejected, truth) -> EvalMetrics:
    rej = np.asarray(rejected, dtype=bool)
    tru = np.asarray(truth, dtype=bool)
    if rej.shape != tru.shape:
        raise ValueError("rejection and truth vectors differ in length")
    n_rej = int(rej.sum())
    n_true = int(tru.sum())
    false = int((rej & ~tru).sum())
    hits = int((rej & tru).sum())
    return EvalMetrics(false / max(n_rej, 1), hits / max(n_true, 1), n_rej, n_true)
