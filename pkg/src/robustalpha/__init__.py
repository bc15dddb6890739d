"""Robust selection of positive-alpha funds with false discovery rate control.

The four screening procedures are D-BH (OLS t-tests), SS-BH (spatial-sign
statistics), F-BH (t-tests after PCA factor adjustment) and FSS-BH
(spatial-sign statistics after elliptical-PCA factor adjustment); all feed
one-sided p-values to the Benjamini-Hochberg step-up rule.
"""

from .backtest import BacktestConfig, NetValueCurve, rolling_backtest, sharpe_select
from .errors import RobustAlphaError
from .latent import (
    LatentFactorFit,
    fbh_statistics,
    factor_adjust,
    fit_elliptical,
    fit_pca,
    kendall_tau,
    select_factor_count,
)
from .multitest import (
    Method,
    ProcedureOptions,
    TestReport,
    bh_reject,
    evaluate,
    one_sided_p,
    run_procedure,
)
from .panel import (
    FactorPanel,
    ReturnPanel,
    build_projection,
    fit_ols_alpha,
    read_factors_csv,
    read_returns_csv,
    residualize,
)
from .simulation import ScenarioConfig, generate_replicate, run_sweep
from .spatial import estimate_varsigma, fit_spatial_median, sign_statistics, spatial_sign

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig", "NetValueCurve", "rolling_backtest", "sharpe_select",
    "RobustAlphaError",
    "LatentFactorFit", "fbh_statistics", "factor_adjust", "fit_elliptical", "fit_pca",
    "kendall_tau", "select_factor_count",
    "Method", "ProcedureOptions", "TestReport", "bh_reject", "evaluate", "one_sided_p",
    "run_procedure",
    "FactorPanel", "ReturnPanel", "build_projection", "fit_ols_alpha", "read_factors_csv",
    "read_returns_csv", "residualize",
    "ScenarioConfig", "generate_replicate", "run_sweep",
    "estimate_varsigma", "fit_spatial_median", "sign_statistics", "spatial_sign",
]
