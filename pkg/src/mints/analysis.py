"""Substantive analysis models fitted to each completed dataset.

``fit_ols`` is simple linear regression with classical standard errors.
``fit_random_intercept`` fits ``y = b0 + b1 x + u_g + e`` by REML, profiling
the criterion over the variance ratio ``theta = var(u) / var(e)``; group
structure gives closed forms for ``V^{-1}`` and ``log|V|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["FitResult", "AnalysisError", "fit_ols", "fit_random_intercept", "reml_criterion"]

THETA_MIN = 1e-8
THETA_MAX = 1e4
_GOLDEN = (math.sqrt(5) - 1) / 2


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    coef: dict
    se: dict
    var_residual: float
    n: int
    var_random_intercept: float | None = None
    theta: float | None = None
    boundary: bool = False
    reml_loglik: float | None = None

    @property
    def slope(self) -> float:
        return self.coef["slope"]

    @property
    def slope_var(self) -> float:
        return self.se["slope"] ** 2


def _clean(y, x):
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if y.size != x.size:
        raise AnalysisError("y and x differ in length")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise AnalysisError("non-finite values in the analysis data")
    return y, x


def fit_ols(y, x) -> FitResult:
    """Least squares of ``y`` on ``[1, x]`` with ``n - 2`` residual variance."""
    y, x = _clean(y, x)
    n = y.size
    if n < 3:
        raise AnalysisError(f"need at least 3 observations, got {n}")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 0:
        raise AnalysisError("predictor is constant; slope not identified")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    s2 = float(resid @ resid) / (n - 2)
    se_slope = math.sqrt(s2 / sxx)
    se_int = math.sqrt(s2 * (1.0 / n + x.mean() ** 2 / sxx))
    return FitResult({"intercept": intercept, "slope": slope},
                     {"intercept": se_int, "slope": se_slope}, s2, n)


class _GroupSums:
    """Per-group moments that make the REML profile O(groups) per theta."""

    def __init__(self, y, X, groups):
        labels, inv = np.unique(np.asarray(groups), return_inverse=True)
        self.n_groups = labels.size
        self.N, self.p = X.shape
        self.ng = np.bincount(inv).astype(float)
        self.sx = np.zeros((labels.size, self.p))
        np.add.at(self.sx, inv, X)
        self.sy = np.bincount(inv, weights=y)
        self.XtX = X.T @ X
        self.Xty = X.T @ y
        self.yty = float(y @ y)

    def gls(self, theta):
        k = theta / (1.0 + self.ng * theta)
        A = self.XtX - (self.sx * k[:, None]).T @ self.sx
        bvec = self.Xty - (self.sx * k[:, None]).T @ self.sy
        c = self.yty - float(np.sum(k * self.sy ** 2))
        beta = np.linalg.solve(A, bvec)
        rss = c - float(bvec @ beta)
        logdet_v = float(np.sum(np.log1p(self.ng * theta)))
        return A, beta, max(rss, 0.0), logdet_v

    def criterion(self, theta):
        A, _, rss, logdet_v = self.gls(theta)
        s2 = rss / (self.N - self.p)
        if s2 <= 0:
            return math.inf
        _, logdet_a = np.linalg.slogdet(A)
        return -0.5 * ((self.N - self.p) * math.log(s2) + logdet_v + logdet_a)


def _design(y, x, groups):
    y, x = _clean(y, x)
    groups = np.asarray(groups).ravel()
    if groups.size != y.size:
        raise AnalysisError("groups and y differ in length")
    X = np.column_stack([np.ones_like(x), x])
    if np.ptp(x) == 0:
        raise AnalysisError("predictor is constant; slope not identified")
    return y, X, groups


def reml_criterion(theta, y, x, groups) -> float:
    """Profiled REML log-likelihood (up to a constant) at variance ratio ``theta``."""
    y, X, groups = _design(y, x, groups)
    return _GroupSums(y, X, groups).criterion(float(theta))


def _golden_max(fun, a, b, tol):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def fit_random_intercept(y, x, groups, grid_points=200, tol=1e-8) -> FitResult:
    """REML random-intercept fit with slope on ``x``.

    The ratio ``theta`` is searched on a log grid over ``[1e-8, 1e4]`` and
    refined by golden section in ``log theta``; ``theta = 0`` is compared
    explicitly and, when it wins, the fit is returned with ``boundary=True``.
    """
    y, X, groups = _design(y, x, groups)
    gs = _GroupSums(y, X, groups)
    if gs.n_groups < 2:
        raise AnalysisError("need at least 2 groups")
    if gs.N - gs.p < 1:
        raise AnalysisError("too few observations for REML")

    def f(log_t):
        return gs.criterion(math.exp(log_t))

    at_zero = gs.criterion(0.0)
    if gs.ng.max() < 2:
        # singleton groups: the profile is flat in theta, nothing to separate
        theta, best, boundary = 0.0, at_zero, True
    else:
        lo, hi = math.log(THETA_MIN), math.log(THETA_MAX)
        grid = np.linspace(lo, hi, grid_points)
        vals = np.array([f(g) for g in grid])
        i = int(np.argmax(vals))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
        log_t, best = _golden_max(f, a, b, tol)
        if vals[i] > best:
            log_t, best = grid[i], vals[i]
        theta = math.exp(log_t)
        boundary = at_zero >= best
        if boundary:
            theta, best = 0.0, at_zero

    A, beta, rss, _ = gs.gls(theta)
    s2 = rss / (gs.N - gs.p)
    cov = s2 * np.linalg.inv(A)
    se = np.sqrt(np.diag(cov))
    return FitResult(
        coef={"intercept": float(beta[0]), "slope": float(beta[1])},
        se={"intercept": float(se[0]), "slope": float(se[1])},
        var_residual=float(s2),
        n=int(gs.N),
        var_random_intercept=float(theta * s2),
        theta=float(theta),
        boundary=bool(boundary),
        reml_loglik=float(best),
    )
