"""Spatial signs, the diagonal spatial-median fit and sign-based alpha statistics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScale, NegativeDenominator, NonConvergenceWarning

ZERO_NORM = 1e-12
SCALE_FLOOR = 1e-14


def spatial_sign(x) -> np.ndarray:
    """``x / ||x||``, or the zero vector when ``||x|| <= 1e-12``."""
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    if nrm <= ZERO_NORM:
        return np.zeros_like(x)
    return x / nrm


def _row_signs(xi):
    norms = np.sqrt(np.einsum("tj,tj->t", xi, xi))
    keep = norms > ZERO_NORM
    u = np.zeros_like(xi)
    u[keep] = xi[keep] / norms[keep, None]
    return u, norms, keep


@dataclass(frozen=True)
class SpatialMedianFit:
    theta_hat: np.ndarray
    d_half: np.ndarray
    iterations: int
    converged: bool
    last_step: float
    skipped_rows: int = 0

    def estimating_equations(self, z):
        """Max-norm residuals of the location and diagonal-scatter equations."""
        z = np.asarray(z, dtype=float)
        u, _, _ = _row_signs((z - self.theta_hat) / self.d_half)
        n = z.shape[1]
        loc = np.abs(u.mean(axis=0)).max()
        scat = np.abs((u * u).mean(axis=0) - 1.0 / n).max()
        return float(loc), float(scat)


@dataclass(frozen=True)
class SignScaleEstimate:
    zeta_m1: float
    zeta_1: float
    zeta_2: float
    varsigma: float
    skipped_rows: int = 0


def fit_spatial_median(z, tol: float = 1e-8, max_iters: int = 200) -> SpatialMedianFit:
    """Joint fixed point for location ``theta`` and diagonal scatter ``D``.

    Iterates, starting from the sample mean and variance::

        xi_t  = D^{-1/2} (Z_t - theta)
        theta <- theta + D^{1/2} sum_t U(xi_t) / sum_t ||xi_t||^{-1}
        D     <- N D^{1/2} diag(T^{-1} sum_t U(xi_t) U(xi_t)') D^{1/2}

    until both the max-norm step in ``theta`` and the max relative change in
    ``D^{1/2}`` drop below ``tol``. Rows with ``xi_t = 0`` are skipped.
    Failing to converge within ``max_iters`` is reported through
    ``converged=False`` and a :class:`NonConvergenceWarning`, not raised.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ValueError("z must be a T x N array")
    t, n = z.shape
    if t < 3:
        raise ValueError(f"need at least 3 rows, got {t}")
    theta = z.mean(axis=0)
    d = z.var(axis=0, ddof=1)
    if (d < SCALE_FLOOR).any():
        j = int(np.argmin(d))
        raise DegenerateScale(f"column {j} has (near) zero spread: var={d[j]:.3g}")
    d_half = np.sqrt(d)

    converged = False
    step = math.inf
    skipped = 0
    it = 0
    for it in range(1, max_iters + 1):
        u, norms, keep = _row_signs((z - theta) / d_half)
        skipped = int(t - keep.sum())
        inv_sum = (1.0 / norms[keep]).sum()
        delta = d_half * u.sum(axis=0) / inv_sum
        theta = theta + delta
        d_new = n * d_half**2 * (u * u).sum(axis=0) / t
        if (d_new < SCALE_FLOOR).any():
            j = int(np.argmin(d_new))
            raise DegenerateScale(f"scale of column {j} collapsed to {d_new[j]:.3g}")
        d_half_new = np.sqrt(d_new)
        rel = np.abs(d_half_new / d_half - 1.0).max()
        d_half = d_half_new
        step = float(np.abs(delta).max())
        if step < tol and rel < tol:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"spatial median did not converge in {max_iters} iterations (last step {step:.3g})",
            NonConvergenceWarning,
            stacklevel=2,
        )
    return SpatialMedianFit(theta, d_half, it, converged, step, skipped)


def estimate_varsigma(z, fit: SpatialMedianFit, omega_t: float, big_t: int) -> SignScaleEstimate:
    """Moments of ``||D^{-1/2}(Z_t - theta)||`` and the variance correction ``varsigma``.

    ``varsigma = N z_{-1}^2 / {1 - 2 c z_{-1} z_1 + c z_2 z_{-1}^2}`` with
    ``c = 1 - omega_T / T``; rows with zero norm are left out of the moments.
    """
    z = np.asarray(z, dtype=float)
    if not 0 < omega_t <= big_t * (1 + 1e-12):
        raise ValueError(f"omega_t must lie in (0, T], got {omega_t} with T={big_t}")
    n = z.shape[1]
    eps = (z - fit.theta_hat) / fit.d_half
    norms = np.sqrt(np.einsum("tj,tj->t", eps, eps))
    keep = norms > ZERO_NORM
    r = norms[keep]
    if r.size == 0:
        raise NegativeDenominator("every standardized row has zero norm")
    zm1 = float(np.mean(1.0 / r))
    z1 = float(np.mean(r))
    z2 = float(np.mean(r * r))
    c = 1.0 - omega_t / big_t
    denom = 1.0 - 2.0 * c * zm1 * z1 + c * z2 * zm1**2
    if denom <= 1e-12:
        raise NegativeDenominator(f"varsigma denominator is {denom:.3g}")
    varsigma = n * zm1**2 / denom
    return SignScaleEstimate(zm1, z1, z2, float(varsigma), int((~keep).sum()))


def sign_statistics(fit: SpatialMedianFit, scale: SignScaleEstimate, big_t: int) -> np.ndarray:
    """``sqrt(T * varsigma) * theta_i / d_i`` for every coordinate."""
    return math.sqrt(big_t * scale.varsigma) * fit.theta_hat / fit.d_half
