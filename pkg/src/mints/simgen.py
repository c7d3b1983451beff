"""Synthetic bivariate panels: the nonlinear and linear benchmark regimes,
the analysis outcome Z, and draws from the imputation model itself."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from mints.distributions import _as_generator, tn_draw
from mints.panel import BoundsSpec, PanelDataset

log = logging.getLogger(__name__)

# One table of generative constants per regime.
CONSTANTS = {
    "nonlinear": dict(x1_low=0.0, x1_up=25.0, x_low=0.0, x_up=100.0, sigma2=1.0,
                      gamma_dist="uniform", gamma_a=1.0, gamma_b=3.0,
                      y_cap=60.0, y_sigma2=1.0, alpha_low=0.0, alpha_up=5.0,
                      logistic_height=40.0, logistic_mid=60.0, logistic_scale=8.0,
                      log_coef=3.0),
    "linear": dict(x1_low=2.0, x1_up=20.0, x_low=0.0, x_up=100.0, sigma2=2.0,
                   gamma_dist="normal", gamma_a=2.0, gamma_b=0.5,
                   y_cap=100.0, y_sigma2=1.0, alpha_low=0.0, alpha_up=5.0,
                   slope=0.75),
}
OUTCOME = dict(eta_low=0.0, eta_up=15.0, slope=2.0, noise_sd=10.0)
LOG_FLOOR = 1e-6


@dataclass(frozen=True)
class SimConfig:
    regime: str = "nonlinear"
    C: int = 20
    T: int = 30
    seed: int = 0
    start_year: int = 1

    def __post_init__(self):
        if self.regime not in CONSTANTS:
            raise ValueError(f"unknown regime {self.regime!r}; choose from {sorted(CONSTANTS)}")
        if self.C < 2 or self.T < 2:
            raise ValueError("C and T must both be at least 2")

    @property
    def constants(self) -> dict:
        return CONSTANTS[self.regime]


@dataclass
class SimCounters:
    log_clamps: int = 0


def nonlinear_mean(x, alpha, counters: SimCounters | None = None):
    """alpha + 40 / (1 + exp(-(x - 60) / 8)) + 3 log x, with x = 0 clamped to 1e-6."""
    k = CONSTANTS["nonlinear"]
    x = np.asarray(x, dtype=float)
    zero = x <= 0
    if counters is not None:
        counters.log_clamps += int(zero.sum())
    xl = np.where(zero, LOG_FLOOR, x)
    out = (alpha + k["logistic_height"] / (1 + np.exp(-(x - k["logistic_mid"]) / k["logistic_scale"]))
           + k["log_coef"] * np.log(xl))
    return float(out) if out.ndim == 0 else out


def linear_mean(x, alpha):
    return alpha + CONSTANTS["linear"]["slope"] * np.asarray(x, dtype=float)


def gen_panel(cfg: SimConfig, rng=None, counters: SimCounters | None = None) -> PanelDataset:
    """Fully observed C x T panel from the chosen regime."""
    gen = _as_generator(rng) if rng is not None else np.random.default_rng(cfg.seed)
    k = cfg.constants
    counters = counters if counters is not None else SimCounters()
    C, T = cfg.C, cfg.T
    x = np.empty((C, T))
    y = np.empty((C, T))
    sd = math.sqrt(k["sigma2"])
    for c in range(C):
        if k["gamma_dist"] == "uniform":
            g = gen.uniform(k["gamma_a"], k["gamma_b"])
        else:
            g = gen.normal(k["gamma_a"], k["gamma_b"])
        alpha = gen.uniform(k["alpha_low"], k["alpha_up"])
        x[c, 0] = gen.uniform(k["x1_low"], k["x1_up"])
        for t in range(1, T):
            x[c, t] = tn_draw(gen, x[c, t - 1] + g, sd * sd, k["x_low"], k["x_up"])
        for t in range(T):
            if cfg.regime == "nonlinear":
                m = nonlinear_mean(x[c, t], alpha, counters)
            else:
                m = float(linear_mean(x[c, t], alpha))
            up = min(x[c, t], k["y_cap"])
            y[c, t] = tn_draw(gen, m, k["y_sigma2"], 0.0, up) if up > 0 else 0.0
    if counters.log_clamps:
        log.info("clamped %d zero X values before the log", counters.log_clamps)
    bounds = BoundsSpec(x_low=k["x_low"], x_up=k["x_up"], y_low=0.0, y_cap=k["y_cap"])
    ids = tuple(f"C{c + 1:02d}" for c in range(C))
    years = np.arange(cfg.start_year, cfg.start_year + T)
    return PanelDataset(ids, years, x, y, bounds)


def gen_outcome_Z(y_grid, rng, noise_sd=OUTCOME["noise_sd"], eta=None):
    """Z = eta_c + 2 Y + N(0, noise_sd^2) with eta_c ~ U(0, 15) unless given."""
    gen = _as_generator(rng)
    y = np.asarray(y_grid, dtype=float)
    if eta is None:
        eta = gen.uniform(OUTCOME["eta_low"], OUTCOME["eta_up"], y.shape[0])
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (y.shape[0],))
    return eta[:, None] + OUTCOME["slope"] * y + noise_sd * gen.standard_normal(y.shape)


@dataclass(frozen=True)
class ModelTruth:
    """Parameters for drawing a panel from the imputation model itself."""

    gamma: np.ndarray
    alpha: np.ndarray
    beta: float
    rho: float
    sigma_X2: float
    sigma_Y2: float
    x0: np.ndarray
    y0: np.ndarray


def gen_from_model(truth: ModelTruth, T, f, h, rng, bounds: BoundsSpec | None = None,
                   start_year=1) -> PanelDataset:
    """Draw X and Y forward from the random-walk and Y|X equations.

    ``f`` and ``h`` are callables (for example fitted splines); ``h`` must be
    positive. Bounds default to X in [0, inf) and Y in [0, min(X, 100)].
    """
    gen = _as_generator(rng)
    bounds = bounds or BoundsSpec()
    C = len(truth.gamma)
    shape = (C, T)
    x_low, x_up, y_low, y_cap = bounds.grids(shape)
    x = np.empty(shape)
    y = np.empty(shape)
    for c in range(C):
        xp, yp = truth.x0[c], truth.y0[c]
        for t in range(T):
            xp = tn_draw(gen, xp + truth.gamma[c], truth.sigma_X2, x_low[c, t], x_up[c, t])
            x[c, t] = xp
            up = min(xp, y_cap[c, t]) if bounds.y_up_tracks_x else y_cap[c, t]
            m = truth.alpha[c] + truth.beta * float(f(xp)) + truth.rho * yp
            v = truth.sigma_Y2 * float(h(xp))
            yp = tn_draw(gen, m, v, y_low[c, t], up) if up > y_low[c, t] else y_low[c, t]
            y[c, t] = yp
    ids = tuple(f"C{c + 1:02d}" for c in range(C))
    return PanelDataset(ids, np.arange(start_year, start_year + T), x, y, bounds)
