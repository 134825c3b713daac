import sys

import numpy as np
import pytest

from dash_ensemble import Batch, Ensemble, MlpModel, Rng


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at flat vector ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8))


@pytest.fixture
def small_ensemble():
    def make(seed=0, m=3, sizes=(3, 5, 4), activation="tanh"):
        rng = Rng(seed)
        return Ensemble([MlpModel.initialized(list(sizes), rng.child(i), activation) for i in range(m)])
    return make


@pytest.fixture
def small_batch():
    def make(seed=0, b=6, d=3, M=4):
        rng = Rng(1000 + seed)
        return Batch(rng.normal(size=(b, d)), rng.integers(0, M, size=b))
    return make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
