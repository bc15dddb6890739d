"""Latent factor extraction from residual panels.

Two routes are provided:

* ``fit_elliptical`` -- eigenvectors of the spatial Kendall's tau matrix
  (robust to heavy tails), used before the factor-adjusted sign test;
* ``fit_pca`` -- eigenvectors of the ``T x T`` Gram matrix of the residuals,
  used by the factor-adjusted t-test.

Both pick the number of factors by the largest ratio of consecutive
eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AllPairsDegenerate, EigenFailure, InsufficientSpectrum, ZeroEtaVariance
from .panel import OlsAlphaFit, ProjectionContext, ReturnPanel

DEFAULT_K_MAX = 8
EIGEN_FLOOR = 1e-12
PAIR_FLOOR = 1e-12


class Route(str, Enum):
    PCA = "PCA"
    ELLIPTICAL = "ELLIPTICAL"


@dataclass(frozen=True)
class KendallTauMatrix:
    k: np.ndarray
    pair_count: int
    skipped_pairs: int = 0


@dataclass(frozen=True)
class LatentFactorFit:
    r_hat: int
    loadings: np.ndarray
    scores: np.ndarray
    eigenvalues: np.ndarray
    route: Route
    sigma_eta: np.ndarray | None = None

    @property
    def ratios(self) -> np.ndarray:
        lam = np.maximum(self.eigenvalues, EIGEN_FLOOR)
        return lam[:-1] / lam[1:]

    def common_component(self) -> np.ndarray:
        """``T x N`` array with rows ``Gamma W_t``."""
        return self.scores @ self.loadings.T


def kendall_tau(z, block: int = 64) -> KendallTauMatrix:
    """Spatial Kendall's tau ``2/(T(T-1)) sum_{i<j} U(Z_i - Z_j) U(Z_i - Z_j)'``.

    Pairs with ``||Z_i - Z_j|| < 1e-12`` contribute zero and are counted in
    ``skipped_pairs``; the normalisation always uses all ``T(T-1)/2`` pairs.
    Accumulation runs over row blocks in a fixed order, so results are
    reproducible bit for bit.
    """
    z = np.asarray(z, dtype=float)
    t, n = z.shape
    if t < 2:
        raise ValueError("need at least two rows")
    acc = np.zeros((n, n))
    skipped = 0
    for start in range(0, t - 1, block):
        stop = min(start + block, t - 1)
        diffs = []
        for i in range(start, stop):
            diffs.append(z[i + 1:] - z[i])
        d = np.concatenate(diffs, axis=0)
        norms = np.sqrt(np.einsum("pj,pj->p", d, d))
        keep = norms >= PAIR_FLOOR
        skipped += int((~keep).sum())
        u = d[keep] / norms[keep, None]
        acc += u.T @ u
    total = t * (t - 1) // 2
    if skipped == total:
        raise AllPairsDegenerate("every pairwise difference is zero")
    k = acc / total
    k = 0.5 * (k + k.T)
    return KendallTauMatrix(k, total - skipped, skipped)


def select_factor_count(eigenvalues, k_max: int = DEFAULT_K_MAX) -> int:
    """``argmax_{k <= k_max} lambda_k / lambda_{k+1}``, ties going to the smaller ``k``.

    Eigenvalues are floored at 1e-12 first. Ratios within a relative 1e-9 of
    the maximum count as ties so that exact geometric spectra are not split
    by rounding.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if lam.size < k_max + 1:
        raise InsufficientSpectrum(f"need {k_max + 1} eigenvalues, got {lam.size}")
    lam = np.maximum(lam[: k_max + 1], EIGEN_FLOOR)
    ratios = lam[:-1] / lam[1:]
    best = ratios.max()
    return int(np.flatnonzero(ratios >= best * (1 - 1e-9))[0]) + 1


def _fix_signs(vecs):
    idx = np.abs(vecs).argmax(axis=0)
    s = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return vecs * s


def _descending_eigh(a):
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not (np.isfinite(w).all() and np.isfinite(v).all()):
        raise EigenFailure("eigendecomposition produced non-finite values")
    return w[::-1].copy(), v[:, ::-1].copy()


def fit_elliptical(z, k_max: int = DEFAULT_K_MAX) -> LatentFactorFit:
    """Loadings ``sqrt(N) * eigvecs(K_Z)`` and least-squares scores ``Gamma' Z_t / N``."""
    z = np.asarray(z, dtype=float)
    t, n = z.shape
    if n < k_max + 1:
        raise InsufficientSpectrum(f"N={n} is too small for k_max={k_max}")
    if t < k_max + 2:
        raise InsufficientSpectrum(f"T={t} is too small for k_max={k_max}")
    kt = kendall_tau(z)
    lam, vecs = _descending_eigh(kt.k)
    r = select_factor_count(lam, k_max)
    gamma = math.sqrt(n) * _fix_signs(vecs[:, :r])
    scores = z @ gamma / n
    return LatentFactorFit(r, gamma, scores, lam, Route.ELLIPTICAL)


def fit_pca(z, k_max: int = DEFAULT_K_MAX) -> LatentFactorFit:
    """Principal components of ``(TN)^{-1} Z Z'``.

    Scores are ``sqrt(T) * eigvecs`` (so ``W'W = T I``), loadings
    ``Z'W / T``, and ``sigma_eta`` is the per-fund mean square of the
    residual after projecting out the scores.
    """
    z = np.asarray(z, dtype=float)
    t, n = z.shape
    if n < k_max + 1:
        raise InsufficientSpectrum(f"N={n} is too small for k_max={k_max}")
    if t < k_max + 2:
        raise InsufficientSpectrum(f"T={t} is too small for k_max={k_max}")
    lam, vecs = _descending_eigh(z @ z.T / (t * n))
    if lam[0] <= EIGEN_FLOOR:
        raise EigenFailure("residual panel has a degenerate (all zero) spectrum")
    r = select_factor_count(lam, k_max)
    w = math.sqrt(t) * _fix_signs(vecs[:, :r])
    gamma = z.T @ w / t
    eta = z - w @ gamma.T
    sigma_eta = np.einsum("ti,ti->i", eta, eta) / t
    return LatentFactorFit(r, gamma, w, lam, Route.PCA, sigma_eta)


def project_scores(z, loadings) -> np.ndarray:
    """Least-squares factor scores: row ``t`` minimises ``||Z_t - Gamma w||``.

    With orthogonal loadings (``Gamma'Gamma = N I``) this is ``Gamma' Z_t / N``;
    a zero loading matrix gives zero scores.
    """
    z = np.asarray(z, dtype=float)
    sol, *_ = np.linalg.lstsq(np.asarray(loadings, dtype=float), z.T, rcond=None)
    return sol.T


def factor_adjust(y: ReturnPanel, fit: LatentFactorFit, ctx: ProjectionContext) -> np.ndarray:
    """Strip the latent component from every ``Y_t`` and project.

    Scores are re-estimated by least squares on ``Z = M_F Y'`` (so the fit may
    come from a different residual panel), then ``M_F (Y - W Gamma')`` is
    returned as a ``T x N`` array.
    """
    if fit.route is not Route.ELLIPTICAL:
        raise ValueError("factor_adjust expects an elliptical fit")
    if fit.loadings.shape[0] != y.n or ctx.t != y.t:
        raise ValueError("dimension mismatch between panel, fit and projection")
    y.require_complete()
    z = ctx.m_f @ y.values.T
    w = project_scores(z, fit.loadings)
    return ctx.m_f @ (y.values.T - w @ fit.loadings.T)


def fbh_statistics(ols: OlsAlphaFit, fit: LatentFactorFit, ctx: ProjectionContext) -> np.ndarray:
    """Factor-adjusted t-statistics.

    ``(sqrt(w) alpha_i - w^{-1/2} 1'M_F W gamma_i) / sqrt(sigma_eta_i)`` with
    ``w = 1'M_F 1``. ``W`` holds least-squares scores of ``Z = M_F Y'`` on the
    fitted loadings; when the fit was computed from ``Z`` itself these are
    exactly the principal-component scores.
    """
    if fit.route is not Route.PCA:
        raise ValueError("fbh_statistics expects a PCA fit")
    se = fit.sigma_eta
    bad = np.flatnonzero(se < 1e-12)
    if bad.size:
        raise ZeroEtaVariance(f"{bad.size} fund(s) have zero idiosyncratic variance")
    omega = ctx.omega_t
    w = project_scores(ols.residual_panel, fit.loadings)
    correction = (ctx.vartheta @ w) @ fit.loadings.T
    num = math.sqrt(omega) * ols.alpha_hat - correction / math.sqrt(omega)
    return num / np.sqrt(se)
