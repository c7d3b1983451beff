import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mints.analysis import AnalysisError, fit_ols, fit_random_intercept, reml_criterion

# three small random-intercept fixtures with reference REML fits
# (fixed effects, residual variance, group variance) computed offline with
# statsmodels MixedLM and frozen here
FIXTURES = {
    "A": (np.array([1, 2, 3] * 3, float),
          np.array([2.3, 4.1, 6.4, 5.2, 6.8, 9.1, 0.4, 2.9, 4.2]),
          np.repeat([0, 1, 2], 3),
          (0.66667, 1.96667), 0.077344, 5.19351),
    "B": (np.array([0.5, 1.5, 2.5, 3.5, 0.2, 1.1, 2.9, 1.7, 2.2, 3.3]),
          np.array([1.2, 2.0, 3.1, 3.8, 0.9, 1.4, 3.6, 1.1, 1.9, 2.8]),
          np.array([0, 0, 0, 0, 1, 1, 1, 2, 2, 2]),
          (0.296089, 0.955148), 0.0375366, 0.309284),
    "C": (np.array([1, 2, 3, 4, 1.5, 2.5, 3.5, 0.5, 1.0, 2.0, 3.0, 4.0]),
          np.array([3., 5.2, 6.9, 9.1, 5.1, 6.8, 9.2, 1.8, 2.4, 4.5, 6.3, 8.2]),
          np.array([0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2]),
          (1.328862, 1.933938), 0.0350362, 0.655756),
}


def dense_reml(theta, y, x, groups):
    """Profiled REML written with explicit N x N matrices."""
    X = np.column_stack([np.ones_like(x), x])
    Zg = (groups[:, None] == np.unique(groups)[None, :]).astype(float)
    V = np.eye(y.size) + theta * Zg @ Zg.T
    Vi = np.linalg.inv(V)
    A = X.T @ Vi @ X
    b = np.linalg.solve(A, X.T @ Vi @ y)
    r = y - X @ b
    n_p = y.size - X.shape[1]
    s2 = float(r @ Vi @ r) / n_p
    return -0.5 * (n_p * np.log(s2) + np.linalg.slogdet(V)[1] + np.linalg.slogdet(A)[1])


def test_ols_exact_line():
    x = np.arange(6.0)
    f = fit_ols(2 * x + 1, x)
    assert f.slope == pytest.approx(2) and f.coef["intercept"] == pytest.approx(1)
    assert f.var_residual == pytest.approx(0, abs=1e-20)


def test_ols_hand_solution():
    f = fit_ols([2.1, 3.9, 6.2, 7.8, 10.1], [1, 2, 3, 4, 5])
    assert f.coef["intercept"] == pytest.approx(0.05, abs=1e-12)
    assert f.slope == pytest.approx(1.99, abs=1e-12)
    assert f.var_residual == pytest.approx(107 / 3000, rel=1e-12)
    assert f.se["slope"] == pytest.approx(0.05972157622389639, rel=1e-12)


def test_ols_generated_recovery():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 40, 600)
    y = 5 + 2 * x + rng.normal(0, 10, 600)
    f = fit_ols(y, x)
    assert abs(f.slope - 2) < 3 * f.se["slope"]


@pytest.mark.parametrize("bad", [([1, 2], [1, 2]), ([1, 2, 3], [1, 1, 1]), ([1, np.nan, 3], [1, 2, 3])])
def test_ols_errors(bad):
    with pytest.raises(AnalysisError):
        fit_ols(*bad)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 5), st.floats(-10, 10), st.floats(0.2, 5), st.floats(-10, 10), st.integers(0, 1000))
def test_ols_equivariance(a, b, c, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=12)
    y = 1 + 0.5 * x + rng.normal(size=12)
    f = fit_ols(y, x)
    g = fit_ols(c * y + d, a * x + b)
    assert g.slope == pytest.approx(c / a * f.slope, rel=1e-8, abs=1e-10)
    assert g.se["slope"] == pytest.approx(c / a * f.se["slope"], rel=1e-8)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_reml_matches_reference(name):
    x, y, g, fe, scale, re = FIXTURES[name]
    f = fit_random_intercept(y, x, g)
    assert f.coef["intercept"] == pytest.approx(fe[0], rel=1e-3, abs=1e-4)
    assert f.slope == pytest.approx(fe[1], rel=1e-3)
    assert f.var_residual == pytest.approx(scale, rel=1e-3)
    assert f.var_random_intercept == pytest.approx(re, rel=1e-3)
    assert not f.boundary


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_reml_beats_dense_grid(name):
    x, y, g, *_ = FIXTURES[name]
    f = fit_random_intercept(y, x, g)
    at_fit = dense_reml(f.theta, y, x, g)
    assert at_fit == pytest.approx(reml_criterion(f.theta, y, x, g), rel=1e-10)
    grid = np.exp(np.linspace(np.log(1e-8), np.log(1e4), 10_000))
    best = max(dense_reml(t, y, x, g) for t in grid)
    assert at_fit >= best - 1e-6 * abs(best)


def test_boundary_when_groups_agree():
    x = np.array([1, 2, 3, 1, 2, 3, 1, 2, 3], float)
    eps = np.array([0.1, -0.2, 0.1, -0.1, 0.2, -0.1, 0.0, 0.0, 0.0])
    y = 1 + 2 * x + eps
    f = fit_random_intercept(y, x, np.repeat([0, 1, 2], 3))
    assert f.boundary and f.var_random_intercept == 0
    assert f.slope == pytest.approx(fit_ols(y, x).slope, rel=1e-10)


def test_singleton_groups_degrade():
    x = np.arange(6.0)
    y = x + np.array([0.1, -0.1, 0.3, 0.0, -0.2, 0.1])
    f = fit_random_intercept(y, x, np.arange(6))
    assert f.boundary and f.slope == pytest.approx(fit_ols(y, x).slope)


def test_reml_errors():
    with pytest.raises(AnalysisError):
        fit_random_intercept([1, 2, 3], [1, 2, 3], [0, 0, 0])
    with pytest.raises(AnalysisError):
        fit_random_intercept([1, 2, 3], [1, 2, 3], [0, 1])


def test_reml_generative_recovery():
    rng = np.random.default_rng(12)
    est = []
    for _ in range(50):
        g = np.repeat(np.arange(15), 8)
        x = rng.uniform(0, 10, g.size)
        y = 1 + 0.5 * x + rng.normal(0, 2, 15)[g] + rng.normal(0, 1, g.size)
        est.append(fit_random_intercept(y, x, g).var_random_intercept)
    est = np.array(est)
    assert abs(est.mean() - 4.0) < 3 * est.std(ddof=1) / np.sqrt(est.size)
