"""Degree-1 B-splines with adaptive knot selection (A-splines).

The mean function ``f`` and dispersion function ``h`` of the Y|X model are
piecewise linear. Knots are chosen from a quantile grid by adaptive-ridge
reweighting of the slope changes at each candidate knot; the penalty strength
is picked by BIC over a log-spaced grid, and the selected knot set is refit by
ordinary least squares.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from mints._io import atomic_writer, read_data_lines

log = logging.getLogger(__name__)

__all__ = [
    "AsplineConfig",
    "LinearSpline",
    "SplinePair",
    "SplineFitError",
    "bspline_basis_deg1",
    "fit_adaptive_spline",
    "estimate_f_h",
    "evaluate",
]


class SplineFitError(ValueError):
    """Too few or degenerate points for an adaptive fit."""


@dataclass(frozen=True)
class AsplineConfig:
    max_knots: int = 40
    bic_grid: int = 30
    max_iter: int = 50
    tol: float = 1e-6
    ridge_eps2: float = 1e-8
    select_threshold: float = 0.99


@dataclass(frozen=True)
class LinearSpline:
    """Piecewise-linear function through ``(knots[i], coefficients[i])``.

    Constant beyond the outermost knots; values clipped to ``range_clip``.
    """

    knots: np.ndarray
    coefficients: np.ndarray
    range_clip: tuple = (-np.inf, np.inf)
    extrapolation: str = "constant"

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        c = np.asarray(self.coefficients, dtype=float)
        if k.ndim != 1 or k.size < 2 or np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing with at least two entries")
        if c.shape != k.shape:
            raise ValueError("one coefficient per knot required")
        lo, hi = (float(v) for v in self.range_clip)
        if lo > hi:
            raise ValueError("range_clip must satisfy lo <= hi")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "range_clip", (lo, hi))

    def __call__(self, x):
        return evaluate(self, x)

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[1:-1]

    def clipped(self, lo=-np.inf, hi=np.inf) -> "LinearSpline":
        return LinearSpline(self.knots, self.coefficients, (lo, hi), self.extrapolation)

    @classmethod
    def constant(cls, value, lo=-np.inf, hi=np.inf, span=(0.0, 1.0)):
        a, b = span
        if not b > a:
            b = a + 1.0
        return cls(np.array([a, b]), np.array([value, value], dtype=float), (lo, hi))


@dataclass(frozen=True)
class SplinePair:
    """Fitted mean function ``f`` and dispersion function ``h`` (``h >= eps``)."""

    f: LinearSpline
    h: LinearSpline
    eps: float = 0.05


def evaluate(s: LinearSpline, x):
    """Evaluate with linear interpolation, constant extrapolation, then clipping."""
    v = np.interp(x, s.knots, s.coefficients)
    lo, hi = s.range_clip
    v = np.clip(v, lo, hi)
    return float(v) if np.ndim(v) == 0 else v


def bspline_basis_deg1(knots, x):
    """Hat-function weights of ``x`` on the degree-1 B-spline basis over ``knots``.

    Returns an array of ``len(knots)`` weights; at most two are nonzero, and
    they sum to one inside ``[knots[0], knots[-1]]`` (all zero outside).
    """
    k = np.asarray(knots, dtype=float)
    if k.ndim != 1 or k.size < 2:
        raise ValueError("need at least two knots")
    if np.any(np.diff(k) <= 0):
        raise ValueError("knots must be strictly increasing")
    w = np.zeros(k.size)
    if x < k[0] or x > k[-1]:
        return w
    j = int(np.searchsorted(k, x, side="right")) - 1
    if j >= k.size - 1:
        w[-1] = 1.0
        return w
    frac = (x - k[j]) / (k[j + 1] - k[j])
    w[j] = 1.0 - frac
    w[j + 1] = frac
    return w


def _design(knots, x):
    # dense hat basis, vectorised over x
    n, m = x.size, knots.size
    B = np.zeros((n, m))
    j = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, m - 2)
    frac = (x - knots[j]) / (knots[j + 1] - knots[j])
    frac = np.clip(frac, 0.0, 1.0)
    rows = np.arange(n)
    B[rows, j] = 1.0 - frac
    B[rows, j + 1] += frac
    return B


def _slope_change_operator(knots):
    """Rows give the slope jump at each interior knot, scaled by mean spacing.

    For equally spaced knots this is the usual second-order difference.
    """
    m = knots.size
    h = np.diff(knots)
    hbar = h.mean()
    D = np.zeros((m - 2, m))
    for r in range(m - 2):
        D[r, r] = hbar / h[r]
        D[r, r + 1] = -hbar / h[r] - hbar / h[r + 1]
        D[r, r + 2] = hbar / h[r + 1]
    return D


def _lstsq_fit(knots, x, y):
    B = _design(knots, x)
    theta, *_ = np.linalg.lstsq(B, y, rcond=None)
    rss = float(np.sum((y - B @ theta) ** 2))
    return theta, rss


def _bic(rss, n, n_knots, floor):
    return n * np.log(max(rss, floor) / n) + np.log(n) * (n_knots + 2)


def fit_adaptive_spline(xs, ys, config: AsplineConfig | None = None) -> LinearSpline:
    """Least-squares degree-1 spline with knots selected by adaptive ridge + BIC.

    Parameters
    ----------
    xs, ys : array_like
        Data points; at least four, and ``xs`` must not be constant.
    config : AsplineConfig, optional
        Candidate-grid size, BIC grid length and iteration controls.

    Returns
    -------
    LinearSpline
        Knots are the data range endpoints plus the retained interior
        candidates; coefficients are the unpenalised refit.
    """
    cfg = config or AsplineConfig()
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("xs and ys differ in length")
    n = x.size
    if n < 4:
        raise SplineFitError(f"need at least 4 points for an adaptive fit, got {n}")
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise SplineFitError("xs are all equal")

    u = (x - lo) / (hi - lo)
    y_scale = float(np.std(y)) or 1.0
    ys_ = (y - y.mean()) / y_scale

    n_cand = min(cfg.max_knots, n // 4)
    cand = np.unique(np.quantile(u, np.arange(1, n_cand + 1) / (n_cand + 1)))
    cand = cand[(cand > 0.0) & (cand < 1.0)]
    knots = np.concatenate([[0.0], cand, [1.0]])

    B = _design(knots, u)
    BtB, Bty = B.T @ B, B.T @ ys_
    D = _slope_change_operator(knots)

    _, rss_lin = _lstsq_fit(np.array([0.0, 1.0]), u, ys_)
    rss_floor = 1e-12 * n
    best_sel = np.zeros(cand.size, dtype=bool)
    best_bic = _bic(rss_lin, n, 0, rss_floor)
    seen = {best_sel.tobytes()}

    lambdas = np.logspace(-4, 4, cfg.bic_grid) * max(1.0, n / 100.0)
    if cand.size:
        for lam in lambdas:
            w = np.ones(cand.size)
            theta = np.linalg.lstsq(BtB + lam * D.T @ (w[:, None] * D), Bty, rcond=None)[0]
            for _ in range(cfg.max_iter):
                d = D @ theta
                w = 1.0 / (d * d + cfg.ridge_eps2)
                new = np.linalg.lstsq(BtB + lam * D.T @ (w[:, None] * D), Bty, rcond=None)[0]
                change = np.linalg.norm(new - theta) / max(np.linalg.norm(theta), 1e-300)
                theta = new
                if change < cfg.tol:
                    break
            d = D @ theta
            sel = (w * d * d) > cfg.select_threshold
            key = sel.tobytes()
            if key in seen:
                continue
            seen.add(key)
            _, rss = _lstsq_fit(np.concatenate([[0.0], cand[sel], [1.0]]), u, ys_)
            bic = _bic(rss, n, int(sel.sum()), rss_floor)
            if bic < best_bic - 1e-9 or (abs(bic - best_bic) <= 1e-9 and sel.sum() < best_sel.sum()):
                best_bic, best_sel = bic, sel

    final_knots_u = np.concatenate([[0.0], cand[best_sel], [1.0]])
    theta, _ = _lstsq_fit(final_knots_u, u, y)
    return LinearSpline(lo + final_knots_u * (hi - lo), theta)


def _linear_fallback(x, y):
    if x.size >= 2 and np.ptp(x) > 0:
        slope, intercept = np.polyfit(x, y, 1)
        span = (float(x.min()), float(x.max()))
        return LinearSpline(np.array(span), intercept + slope * np.array(span))
    value = float(y.mean()) if y.size else 0.0
    span = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
    return LinearSpline.constant(value, span=span)


def estimate_f_h(pairs, y_bounds=(0.0, np.inf), eps=0.05, config: AsplineConfig | None = None) -> SplinePair:
    """Fit ``f`` to the complete cases and ``h`` to the absolute residuals.

    ``f`` is clipped to ``y_bounds`` and ``h`` below at ``eps``. With fewer
    than four complete cases ``f`` falls back to a straight line and ``h`` to
    the residual standard deviation.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    x, y = pairs[:, 0], pairs[:, 1]
    ylo, yhi = y_bounds
    try:
        f = fit_adaptive_spline(x, y, config).clipped(ylo, yhi)
    except SplineFitError as exc:
        log.warning("mean spline fallback to linear fit: %s", exc)
        f = _linear_fallback(x, y).clipped(ylo, yhi)
        resid = y - f(x) if x.size else np.zeros(0)
        sd = float(np.std(resid, ddof=1)) if resid.size >= 2 else eps
        span = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
        return SplinePair(f, LinearSpline.constant(max(sd, eps), eps, np.inf, span), eps)
    absres = np.abs(y - f(x))
    try:
        h = fit_adaptive_spline(x, absres, config)
    except SplineFitError:
        h = _linear_fallback(x, absres)
    return SplinePair(f, h.clipped(eps, np.inf), eps)


def write_splines_csv(pair: SplinePair, path, header_line=None):
    """Knots and values of ``f`` and ``h`` as ``function,knot,value,clip_low,clip_high``."""
    with atomic_writer(path, header_line) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["function", "knot", "value", "clip_low", "clip_high"])
        for name, s in (("f", pair.f), ("h", pair.h)):
            for k, v in zip(s.knots, s.coefficients):
                w.writerow([name, repr(float(k)), repr(float(v)),
                            repr(s.range_clip[0]), repr(s.range_clip[1])])


def read_splines_csv(path) -> SplinePair:
    rows = {"f": [], "h": []}
    clip = {}
    for rec in csv.DictReader(text for _, text in read_data_lines(path)):
        name = rec["function"]
        if name not in rows:
            raise ValueError(f"unknown spline {name!r} in {path}")
        rows[name].append((float(rec["knot"]), float(rec["value"])))
        clip[name] = (float(rec["clip_low"]), float(rec["clip_high"]))
    if not rows["f"] or not rows["h"]:
        raise ValueError(f"{path} must define both f and h")
    f, h = (LinearSpline(np.array([k for k, _ in rows[n]]), np.array([v for _, v in rows[n]]), clip[n])
            for n in ("f", "h"))
    return SplinePair(f, h, eps=max(clip["h"][0], 1e-12))
