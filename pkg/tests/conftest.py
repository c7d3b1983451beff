import warnings

import numpy as np
import pytest

from mints.distributions import RngStream
from mints.panel import BoundsSpec, PanelDataset
from mints.sampler import RunConfig
from mints.simgen import SimConfig, gen_outcome_Z, gen_panel


def mc_check(draws, mean, var, k=3.0):
    """True when the sample mean and variance are within k Monte Carlo SEs."""
    d = np.asarray(draws, dtype=float)
    n = d.size
    m = d.mean()
    v = d.var(ddof=1)
    se_m = np.sqrt(var / n)
    m4 = np.mean((d - m) ** 4)
    se_v = np.sqrt(max(m4 - v * v, 1e-300) / n)
    return abs(m - mean) <= k * se_m and abs(v - var) <= k * se_v, (m, mean, se_m, v, var, se_v)


def make_panel(x, y, bounds=None, ids=None, start=2000):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ids = ids or tuple(f"c{i}" for i in range(x.shape[0]))
    return PanelDataset(tuple(ids), np.arange(start, start + x.shape[1]), x, y, bounds or BoundsSpec())


@pytest.fixture(scope="session")
def desk_panel():
    d = gen_panel(SimConfig("nonlinear", C=10, T=20), RngStream(11, (0,)).generator)
    z = gen_outcome_Z(d.y_values, RngStream(11, (1,)).generator)
    return d, z


@pytest.fixture
def fast_run():
    return RunConfig(n_chains=2, M=4, n_thin=10, block_iters=500, max_iters=4000, pilot_iters=1000)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, ok, detail)``; also asserts ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n, ok, detail):
        lines.append((n, bool(ok), detail))
        assert ok, f"criterion {n}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
