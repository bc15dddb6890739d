"""Synthetic Fama-French-style panels and a seeded Monte Carlo driver.

Each replicate draws from its own generator, seeded with
``np.random.SeedSequence([seed, rep_index])``, so any replicate can be
regenerated in isolation and replicates may run in any order or in parallel.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np
import pandas as pd

from .errors import RobustAlphaError
from .multitest import ALL_METHODS, Method, ProcedureOptions, evaluate, run_procedure
from .panel import FactorPanel, ReturnPanel


class Scenario(str, Enum):
    I = "I"  # noqa: E741
    II = "II"
    III = "III"


class ErrorLaw(str, Enum):
    NORMAL = "NORMAL"
    T3 = "T3"
    MIXNORMAL = "MIXNORMAL"
    ICM = "ICM"


FACTOR_CORR = 0.5
BETA_RANGES = ((0.2, 2.0), (-1.0, 1.5), (-1.5, 1.5))
POS_ALPHA = (0.15, 0.3)
NEG_ALPHA = (-0.3, -0.2)
DELTA_GRID = tuple(round(0.06 * k, 2) for k in range(9))
RHO_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
SUMMARY_COLUMNS = (
    "scenario", "error_law", "method", "grid_var", "grid_value",
    "mean_fdp", "se_fdp", "mean_tdp", "se_tdp", "reps", "failures",
)


def _parse_enum(cls, value):
    if isinstance(value, cls):
        return value
    key = str(value).upper().replace("-", "").replace("_", "")
    aliases = {"T": "T3", "MIX": "MIXNORMAL", "MN": "MIXNORMAL", "GAUSSIAN": "NORMAL"}
    key = aliases.get(key, key)
    try:
        return cls(key)
    except ValueError:
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown {cls.__name__} {value!r}; expected one of {valid}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario = Scenario.I
    error_law: ErrorLaw = ErrorLaw.NORMAL
    n: int = 200
    t: int = 120
    rho: float = 0.5
    delta: float = 0.48
    pi0: float = 0.1
    gamma: float = 0.1
    reps: int = 100
    seed: int = 0
    kappa: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "scenario", _parse_enum(Scenario, self.scenario))
        object.__setattr__(self, "error_law", _parse_enum(ErrorLaw, self.error_law))
        for name in ("rho", "delta", "pi0", "gamma", "kappa"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not 0 < self.pi0 < 0.5:
            raise ValueError(f"pi0 must lie in (0, 0.5), got {self.pi0}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 <= self.kappa <= 1:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.t < 6:
            raise ValueError(f"t must be >= 6 (three factors plus intercept), got {self.t}")
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        k = self.n_signal
        if k < 1 or 2 * k > self.n:
            raise ValueError(f"floor(pi0*n) = {k} must satisfy 1 <= floor(pi0*n) <= n/2")

    @property
    def n_signal(self) -> int:
        return int(math.floor(self.pi0 * self.n + 1e-9))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.value
        d["error_law"] = self.error_law.value
        return d


@dataclass(frozen=True)
class SyntheticTruth:
    alpha: np.ndarray
    theta: np.ndarray
    positive_set: np.ndarray
    negative_set: np.ndarray
    beta: np.ndarray
    factor_means: np.ndarray


def replicate_rng(seed: int, rep_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(rep_index)]))


def ar1_matrix(n: int, rho: float) -> np.ndarray:
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def scenario_sigma(scenario, n: int, rho: float) -> np.ndarray:
    """Error scatter matrix for Scenarios I-III.

    Scenario II mixes the AR(1) matrix with an equicorrelation block,
    ``(S1 + S2) / sqrt(2)``; Scenario III keeps the AR(1) matrix and adds its
    latent factors separately in :func:`generate_replicate`.
    """
    scenario = _parse_enum(Scenario, scenario)
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    s1 = ar1_matrix(n, rho)
    if scenario is Scenario.II:
        s2 = np.full((n, n), rho)
        s2[np.diag_indices(n)] = 1.0
        return (s1 + s2) / math.sqrt(2.0)
    return s1


def matrix_root(sigma: np.ndarray, symmetric: bool = False):
    """Return ``(A, clipped)`` with ``A A' = sigma``.

    Uses a Cholesky factor unless ``symmetric``; an indefinite matrix falls
    back to the eigenvalue-clipped symmetric root and sets ``clipped``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if not symmetric:
        try:
            return np.linalg.cholesky(sigma), False
        except np.linalg.LinAlgError:
            pass
    w, v = np.linalg.eigh(0.5 * (sigma + sigma.T))
    clipped = bool(w.min() < -1e-10 * max(1.0, abs(w.max())))
    if clipped:
        warnings.warn("scatter matrix is not positive semidefinite; clipping eigenvalues",
                      RuntimeWarning, stacklevel=2)
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return root, clipped


@lru_cache(maxsize=16)
def _cached_root(scenario, n, rho, symmetric):
    root, _ = matrix_root(scenario_sigma(scenario, n, rho), symmetric=symmetric)
    root.flags.writeable = False
    return root


def _draw_with_root(law, root, t, kappa, rng):
    n = root.shape[0]
    if law is ErrorLaw.ICM:
        e = (3.0 - rng.chisquare(3, size=(t, n))) / math.sqrt(6.0)
        return e @ root.T
    g = rng.standard_normal((t, n)) @ root.T
    if law is ErrorLaw.NORMAL:
        return g
    if law is ErrorLaw.T3:
        w = np.sqrt(rng.chisquare(3, size=t) / 3.0)
        return g / w[:, None] / math.sqrt(3.0)
    scale = np.where(rng.random(t) < kappa, 1.0, 3.0)
    return g * scale[:, None] / math.sqrt(kappa + 9.0 * (1.0 - kappa))


def draw_errors(law, sigma, t: int, kappa: float, rng) -> np.ndarray:
    """``T x N`` error draws with scatter ``sigma``, standardized to covariance ``sigma``.

    NORMAL: Gaussian. T3: multivariate t(3) divided by sqrt(3). MIXNORMAL:
    per-row scale 1 w.p. ``kappa`` else 3, divided by sqrt(kappa + 9(1-kappa)).
    ICM: symmetric root of ``sigma`` times iid ``(3 - chi2_3)/sqrt(6)`` coordinates.
    """
    law = _parse_enum(ErrorLaw, law)
    root, _ = matrix_root(sigma, symmetric=law is ErrorLaw.ICM)
    return _draw_with_root(law, root, t, kappa, rng)


def generate_replicate(cfg: ScenarioConfig, rep_index: int, null: bool = False):
    """One synthetic panel ``(ReturnPanel, FactorPanel, SyntheticTruth)``.

    Factor means, betas, signal sets and alphas are all redrawn per replicate.
    With ``null=True`` every alpha is zero, but the draws are otherwise the
    same as for the non-null replicate with the same index.
    """
    rng = replicate_rng(cfg.seed, rep_index)
    n, t = cfg.n, cfg.t
    mu_f = rng.uniform(0.0, 1.0, size=3)
    f_root = np.linalg.cholesky(ar1_matrix(3, FACTOR_CORR))
    f = mu_f + rng.standard_normal((t, 3)) @ f_root.T
    beta = np.column_stack([rng.uniform(lo, hi, size=n) for lo, hi in BETA_RANGES])

    k = cfg.n_signal
    perm = rng.permutation(n)
    pos = np.sort(perm[:k])
    neg = np.sort(perm[k:2 * k])
    alpha = np.zeros(n)
    alpha[pos] = rng.uniform(*POS_ALPHA, size=k) + cfg.delta
    alpha[neg] = rng.uniform(*NEG_ALPHA, size=k)
    if null:
        alpha[:] = 0.0

    root = _cached_root(cfg.scenario, n, cfg.rho, cfg.error_law is ErrorLaw.ICM)
    eps = _draw_with_root(cfg.error_law, root, t, cfg.kappa, rng)
    if cfg.scenario is Scenario.III:
        z1 = rng.standard_normal(t)
        z2 = rng.standard_t(3, size=t) / math.sqrt(3.0)
        zeta = np.zeros(n)
        members = rng.choice(n, size=int(math.floor(math.sqrt(n))), replace=False)
        zeta[members] = rng.uniform(0.0, 1.0, size=members.size)
        eps = eps + 0.5 * z1[:, None] + z2[:, None] * zeta[None, :]

    y = alpha[:, None] + beta @ f.T + eps.T
    ids = [f"fund{i:03d}" for i in range(n)]
    periods = [f"t{s:03d}" for s in range(t)]
    panel = ReturnPanel(y, ids, periods)
    factors = FactorPanel(f, ("mktrf", "smb", "hml"), periods)
    truth = SyntheticTruth(alpha, alpha > 0, pos, neg, beta, mu_f)
    return panel, factors, truth


def replicate_metrics(cfg: ScenarioConfig, rep_index: int, methods=ALL_METHODS,
                      options: ProcedureOptions | None = None, null: bool = False) -> dict:
    """Run every method on one replicate.

    Returns ``{method: (fdp, tdp, failed)}``; ``fdp``/``tdp`` are NaN when the
    method raised, and ``failed`` also flags a spatial-median fit that did not
    converge.
    """
    panel, factors, truth = generate_replicate(cfg, rep_index, null=null)
    out = {}
    for m in methods:
        m = Method.parse(m)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rep = run_procedure(m, panel, factors, cfg.gamma, options)
        except RobustAlphaError:
            out[m] = (math.nan, math.nan, True)
            continue
        ev = evaluate(rep, truth.theta)
        out[m] = (ev.fdp, ev.tdp, rep.diagnostics.get("converged") is False)
    return out


def _replicate_job(args):
    cfg, rep_index, methods, options = args
    return replicate_metrics(cfg, rep_index, methods, options)


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return math.nan, math.nan
    mean = float(math.fsum(x) / x.size)
    if x.size < 2:
        return mean, math.nan
    return mean, float(np.std(x, ddof=1) / math.sqrt(x.size))


def run_sweep(cfg: ScenarioConfig, methods=ALL_METHODS, sweep: dict | None = None,
              options: ProcedureOptions | None = None, n_jobs: int = 1) -> pd.DataFrame:
    """Mean and standard error of FDP/TDP per grid point and method.

    ``sweep`` maps one of ``"delta"`` or ``"rho"`` to a list of values; by
    default the single point ``{"delta": [cfg.delta]}`` is used. Replicates
    that raise are excluded from the means and counted in ``failures``
    together with non-converged fits.
    """
    methods = [Method.parse(m) for m in methods]
    if not methods:
        raise ValueError("no methods requested")
    sweep = sweep or {"delta": [cfg.delta]}
    if len(sweep) != 1:
        raise ValueError("sweep must name exactly one grid variable")
    (var, grid), = sweep.items()
    if var not in ("delta", "rho"):
        raise ValueError(f"grid variable must be 'delta' or 'rho', got {var!r}")
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")

    rows = []
    for value in grid:
        point = replace(cfg, **{var: float(value)})
        jobs = [(point, r, tuple(methods), options) for r in range(point.reps)]
        if n_jobs > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as ex:
                results = list(ex.map(_replicate_job, jobs))
        else:
            results = [_replicate_job(j) for j in jobs]
        for m in methods:
            fdp = [r[m][0] for r in results]
            tdp = [r[m][1] for r in results]
            failures = sum(1 for r in results if r[m][2])
            mf, sf = _mean_se(fdp)
            mt, st = _mean_se(tdp)
            rows.append({
                "scenario": point.scenario.value,
                "error_law": point.error_law.value,
                "method": m.value,
                "grid_var": var,
                "grid_value": float(value),
                "mean_fdp": mf,
                "se_fdp": sf,
                "mean_tdp": mt,
                "se_tdp": st,
                "reps": point.reps,
                "failures": failures,
            })
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))


def write_sweep_csv(table: pd.DataFrame, path, header_lines=()):
    """Write the long-format summary; ``header_lines`` become leading ``#`` comments."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for rec in table.itertuples(index=False):
            w.writerow([repr(v) if isinstance(v, float) else v for v in rec])
