import numpy as np
import pytest

from robustalpha.panel import FactorPanel, ReturnPanel


def make_panel(n=20, t=120, p=3, alpha=None, noise=1.0, seed=0, latent=None):
    """Linear factor panel with Gaussian noise; ``latent`` adds ``W Gamma'`` columns."""
    rng = np.random.default_rng(seed)
    f = rng.normal(0.3, 1.0, size=(t, p))
    beta = rng.uniform(-1, 1, size=(n, p))
    a = np.zeros(n) if alpha is None else np.asarray(alpha, dtype=float)
    eps = noise * rng.standard_normal((t, n))
    if latent is not None:
        eps = eps + latent(rng, t, n)
    y = a[:, None] + beta @ f.T + eps.T
    return ReturnPanel(y), FactorPanel(f), beta


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
