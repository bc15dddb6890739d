import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustalpha.errors import AllPairsDegenerate, EigenFailure, InsufficientSpectrum, ZeroEtaVariance
from robustalpha.latent import (
    LatentFactorFit,
    Route,
    factor_adjust,
    fbh_statistics,
    fit_elliptical,
    fit_pca,
    kendall_tau,
    select_factor_count,
)
from robustalpha.panel import FactorPanel, ReturnPanel, build_projection, fit_ols_alpha, residualize
from robustalpha.spatial import spatial_sign


def brute_kendall(z):
    t, n = z.shape
    acc = np.zeros((n, n))
    for i in range(t):
        for j in range(i + 1, t):
            u = spatial_sign(z[i] - z[j])
            acc += np.outer(u, u)
    return acc * 2 / (t * (t - 1))


def rank_one(rng, n=100, t=200, noise=0.1):
    gamma = rng.normal(1.0, 0.5, n)
    w = rng.standard_normal(t)
    return np.outer(w, gamma) + noise * rng.standard_normal((t, n)), gamma, w


def angle(a, b):
    c = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.acos(min(1.0, c))


def test_kendall_single_pair():
    z = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 2.0]])
    k = kendall_tau(z)
    u = spatial_sign(z[0] - z[1])
    np.testing.assert_allclose(k.k, np.outer(u, u), atol=1e-15)
    assert np.linalg.matrix_rank(k.k) == 1
    assert np.trace(k.k) == pytest.approx(1.0)


def test_kendall_all_identical():
    with pytest.raises(AllPairsDegenerate):
        kendall_tau(np.ones((5, 3)))


def test_kendall_matches_brute_force(rng):
    z = rng.standard_normal((37, 5))
    np.testing.assert_allclose(kendall_tau(z, block=7).k, brute_kendall(z), atol=1e-14)


def test_kendall_skipped_pairs_counted(rng):
    z = rng.standard_normal((6, 3))
    z[3] = z[1]
    k = kendall_tau(z)
    assert k.skipped_pairs == 1 and k.pair_count == 14
    assert np.trace(k.k) == pytest.approx(14 / 15)


@pytest.mark.parametrize("seed", range(5))
def test_kendall_spike_alignment(seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(10)
    v /= np.linalg.norm(v)
    cov = np.eye(10) + 24 * np.outer(v, v)
    z = rng.multivariate_normal(np.zeros(10), cov, size=50)
    w, vecs = np.linalg.eigh(kendall_tau(z).k)
    assert angle(vecs[:, -1], v) < 0.2


@settings(max_examples=25, deadline=None)
@given(t=st.integers(3, 40), n=st.integers(2, 12), seed=st.integers(0, 2**16))
def test_kendall_invariants(t, n, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((t, n))
    k = kendall_tau(z).k
    assert np.abs(k - k.T).max() < 1e-12
    assert np.linalg.eigvalsh(k).min() > -1e-8
    assert abs(np.trace(k) - 1) < 1e-10
    shifted = kendall_tau(z + rng.uniform(-3, 3, n)).k
    assert np.abs(shifted - k).max() < 1e-12


def test_select_factor_count_examples():
    assert select_factor_count([10, 5, 0.1, 0.09, 0.08], 4) == 2
    assert select_factor_count([9, 3, 1, 1 / 3, 1 / 9], 4) == 1
    assert select_factor_count([100, 1, 0.999, 0.998, 0.997], 4) == 1
    with pytest.raises(InsufficientSpectrum):
        select_factor_count([3, 2, 1], 4)


def test_select_factor_count_floor():
    # zeros in the tail are floored, so the ratio at the zero boundary wins
    assert select_factor_count([5.0, 4.0, 0.0, 0.0], 3) == 2


@settings(max_examples=50, deadline=None)
@given(lam=st.lists(st.floats(1e-6, 1e6), min_size=5, max_size=12), c=st.floats(1e-3, 1e3))
def test_select_factor_count_scale_invariant(lam, c):
    lam = sorted(lam, reverse=True)
    k_max = len(lam) - 1
    a = select_factor_count(lam, k_max)
    b = select_factor_count([c * x for x in lam], k_max)
    if a != b:
        # only acceptable when the two ratios are equal up to rounding
        r = np.array(lam[:-1]) / np.array(lam[1:])
        assert abs(r[a - 1] - r[b - 1]) <= 1e-9 * r.max()


def test_elliptical_rank_one_reconstruction():
    rng = np.random.default_rng(5)
    z, gamma, w = rank_one(rng)
    fit = fit_elliptical(z, 8)
    assert fit.r_hat == 1 and fit.route is Route.ELLIPTICAL
    truth = np.outer(w, gamma)
    assert np.linalg.norm(fit.common_component() - truth) / np.linalg.norm(truth) < 0.2
    np.testing.assert_allclose(fit.loadings.T @ fit.loadings, 100 * np.eye(1), atol=1e-8)
    assert (np.diff(fit.eigenvalues) <= 1e-15).all()


def test_elliptical_sign_flip_invariance():
    rng = np.random.default_rng(6)
    z, _, _ = rank_one(rng, n=30, t=60)
    fit = fit_elliptical(z, 4)
    flipped = LatentFactorFit(fit.r_hat, -fit.loadings, -fit.scores, fit.eigenvalues, fit.route)
    np.testing.assert_array_equal(flipped.common_component(), fit.common_component())


def test_elliptical_sign_convention():
    rng = np.random.default_rng(7)
    z, _, _ = rank_one(rng, n=30, t=60)
    fit = fit_elliptical(z, 4)
    col = fit.loadings[:, 0]
    assert col[np.abs(col).argmax()] > 0


def test_elliptical_pure_noise_spectrum():
    z = np.random.default_rng(8).standard_normal((120, 200))
    fit = fit_elliptical(z, 8)
    assert fit.ratios[0] < 3


def test_pca_rank_one_alignment():
    rng = np.random.default_rng(9)
    z, gamma, _ = rank_one(rng)
    fit = fit_pca(z, 8)
    assert fit.r_hat == 1 and fit.route is Route.PCA
    assert angle(fit.loadings[:, 0], gamma) < 0.2
    np.testing.assert_allclose(fit.scores.T @ fit.scores, 200 * np.eye(1), atol=1e-8)
    eta = z - fit.scores @ fit.loadings.T
    np.testing.assert_allclose(fit.sigma_eta, (eta**2).mean(axis=0), rtol=1e-12)


def test_pca_zero_matrix():
    with pytest.raises(EigenFailure):
        fit_pca(np.zeros((20, 10)), 4)


def test_fits_need_enough_dimensions(rng):
    with pytest.raises(InsufficientSpectrum):
        fit_pca(rng.standard_normal((20, 5)), 8)
    with pytest.raises(InsufficientSpectrum):
        fit_elliptical(rng.standard_normal((8, 20)), 8)


def _panel(rng, n=40, t=100, alpha=None, latent=True, noise=1.0):
    f = rng.normal(0.2, 1.0, (t, 2))
    beta = rng.uniform(-1, 1, (n, 2))
    a = np.zeros(n) if alpha is None else alpha
    gamma = rng.normal(1.0, 0.3, n) if latent else np.zeros(n)
    w = rng.standard_normal(t) * 2
    y = a[:, None] + beta @ f.T + np.outer(gamma, w) + noise * rng.standard_normal((n, t))
    return ReturnPanel(y), FactorPanel(f), gamma, w


def test_factor_adjust_zero_loadings(rng):
    panel, factors, _, _ = _panel(rng)
    ctx = build_projection(factors)
    fit = LatentFactorFit(1, np.zeros((40, 1)), np.zeros((100, 1)), np.ones(3), Route.ELLIPTICAL)
    np.testing.assert_allclose(factor_adjust(panel, fit, ctx), residualize(panel, ctx), atol=1e-14)


def test_factor_adjust_exact_structure(rng):
    alpha = np.where(np.arange(40) < 10, 0.5, 0.0)
    panel, factors, gamma, w = _panel(rng, alpha=alpha, noise=0.0)
    ctx = build_projection(factors)
    # exact loadings scaled to N I and the latent-source panel
    q = gamma / np.linalg.norm(gamma) * math.sqrt(40)
    fit = LatentFactorFit(1, q[:, None], np.zeros((100, 1)), np.ones(3), Route.ELLIPTICAL)
    zb = factor_adjust(panel, fit, ctx)
    target = np.outer(ctx.vartheta, alpha)
    # alpha leaks into the least-squares scores only through its projection on gamma
    leak = np.outer(ctx.vartheta, q * (q @ alpha) / 40)
    np.testing.assert_allclose(zb, target - leak, atol=1e-9)


def test_factor_adjust_sign_flip(rng):
    panel, factors, _, _ = _panel(rng)
    ctx = build_projection(factors)
    fit = fit_elliptical(residualize(panel, ctx), 4)
    flipped = LatentFactorFit(fit.r_hat, -fit.loadings, -fit.scores, fit.eigenvalues, fit.route)
    np.testing.assert_allclose(factor_adjust(panel, flipped, ctx), factor_adjust(panel, fit, ctx),
                               atol=1e-12)


def test_factor_adjust_rejects_pca_fit(rng):
    panel, factors, _, _ = _panel(rng)
    ctx = build_projection(factors)
    with pytest.raises(ValueError):
        factor_adjust(panel, fit_pca(residualize(panel, ctx), 4), ctx)


def test_fbh_zero_loadings(rng):
    panel, factors, _, _ = _panel(rng)
    ctx = build_projection(factors)
    ols = fit_ols_alpha(panel, ctx, factors)
    se = rng.uniform(0.5, 2.0, 40)
    fit = LatentFactorFit(1, np.zeros((40, 1)), np.zeros((100, 1)), np.ones(3), Route.PCA, se)
    np.testing.assert_allclose(fbh_statistics(ols, fit, ctx),
                               math.sqrt(ctx.omega_t) * ols.alpha_hat / np.sqrt(se), atol=1e-12)


def test_fbh_scores_orthogonal_to_vartheta(rng):
    panel, factors, _, _ = _panel(rng)
    ctx = build_projection(factors)
    ols = fit_ols_alpha(panel, ctx, factors)
    se = np.ones(40)
    # a loading direction that no column of Z projects onto through vartheta
    gamma = rng.standard_normal((40, 1))
    z = ols.residual_panel
    scores, *_ = np.linalg.lstsq(gamma, z.T, rcond=None)
    assert abs(ctx.vartheta @ scores.T).max() > 0  # generic case has a correction
    fit = LatentFactorFit(1, gamma, scores.T, np.ones(3), Route.PCA, se)
    out = fbh_statistics(ols, fit, ctx)
    corr = (ctx.vartheta @ scores.T) @ gamma.T / math.sqrt(ctx.omega_t)
    np.testing.assert_allclose(out, math.sqrt(ctx.omega_t) * ols.alpha_hat - corr, atol=1e-10)


def test_fbh_zero_eta(rng):
    panel, factors, _, _ = _panel(rng)
    ctx = build_projection(factors)
    ols = fit_ols_alpha(panel, ctx, factors)
    se = np.ones(40)
    se[3] = 0.0
    fit = LatentFactorFit(1, np.zeros((40, 1)), np.zeros((100, 1)), np.ones(3), Route.PCA, se)
    with pytest.raises(ZeroEtaVariance):
        fbh_statistics(ols, fit, ctx)


@pytest.mark.slow
def test_fbh_null_calibration():
    stats = []
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        panel, factors, _, _ = _panel(rng, n=200, t=120)
        ctx = build_projection(factors)
        ols = fit_ols_alpha(panel, ctx, factors)
        fit = fit_pca(ctx.m_f_tilde @ panel.values.T, 8)
        stats.append(fbh_statistics(ols, fit, ctx))
    v = np.var(stats, axis=0, ddof=1)
    assert ((v >= 0.7) & (v <= 1.3)).mean() >= 0.95
    assert 0.7 <= v.mean() <= 1.3
