"""Data-based control parameters for the MINTS prior distributions.

Variance hyperparameters come from observed first differences (both ends of a
consecutive-year pair observed), and the start-year prior is fitted to complete
cases in an "early" window of years.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from mints.panel import PanelDataset

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-4
R_CAP = 0.99
DEFAULT_EARLY_YEARS = 11

# fixed priors on the (beta, rho) block
BETA_PRIOR_MEAN = 0.0
BETA_PRIOR_VAR = 1.0
RHO_SUPPORT = (0.0, 1.0)

# slot layout of ControlParams.as_array(), shared with the compiled sampler
D_X, NU_DRIFT, ZETA_DRIFT2, D_DRIFT, D_Y, NU0, ZETA0_2, D_0 = range(8)
MU_YE, MU_XE, VAR_YE, VAR_XE, R = range(8, 13)
N_CP = 13


class PriorConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class ControlParams:
    delta_X: float
    nu_drift: float
    zeta_drift: float
    delta_drift: float
    delta_Y: float
    zeta_0: float
    delta_0: float
    mu_early: tuple          # (mean Y, mean X)
    sigma_early: tuple       # 2x2 nested tuple, Y first
    early_window: tuple      # (first year, last year), inclusive
    nu_0: float = 0.0

    @property
    def r(self) -> float:
        s = np.asarray(self.sigma_early)
        return float(s[0, 1] / np.sqrt(s[0, 0] * s[1, 1]))

    def as_array(self) -> np.ndarray:
        s = np.asarray(self.sigma_early, dtype=float)
        out = np.empty(N_CP)
        out[D_X] = self.delta_X
        out[NU_DRIFT] = self.nu_drift
        out[ZETA_DRIFT2] = max(self.zeta_drift ** 2, VARIANCE_FLOOR)
        out[D_DRIFT] = self.delta_drift
        out[D_Y] = self.delta_Y
        out[NU0] = self.nu_0
        out[ZETA0_2] = max(self.zeta_0 ** 2, VARIANCE_FLOOR)
        out[D_0] = self.delta_0
        out[MU_YE], out[MU_XE] = self.mu_early
        out[VAR_YE], out[VAR_XE] = s[0, 0], s[1, 1]
        out[R] = self.r
        return out

    def summary(self) -> dict:
        d = asdict(self)
        d["r"] = self.r
        return d


def _first_differences(values, mask):
    """Per-country arrays of differences where both years are observed."""
    both = mask[:, 1:] & mask[:, :-1]
    diff = values[:, 1:] - values[:, :-1]
    return [diff[c][both[c]] for c in range(values.shape[0])]


def _diff_moments(values, mask, name):
    per_country = _first_differences(values, mask)
    pooled = np.concatenate(per_country) if per_country else np.zeros(0)
    if pooled.size == 0:
        raise PriorConstructionError(
            f"no observed consecutive-year differences of {name}; cannot build its prior")
    var = float(np.var(pooled, ddof=1)) if pooled.size > 1 else 0.0
    mean = float(pooled.mean())
    se = float(np.sqrt(var / pooled.size))
    cmeans = np.array([d.mean() for d in per_country if d.size > 0])
    cvar = float(np.var(cmeans, ddof=1)) if cmeans.size > 1 else 0.0
    return var, mean, se, cvar


def _floor(value, name):
    if not value >= VARIANCE_FLOOR:
        log.info("%s = %g floored to %g", name, value, VARIANCE_FLOOR)
        return VARIANCE_FLOOR
    return value


def default_early_window(d: PanelDataset):
    years = d.years
    return int(years[0]), int(years[min(DEFAULT_EARLY_YEARS, years.size) - 1])


def compute_control_params(d: PanelDataset, early_window=None) -> ControlParams:
    """Build every data-based hyperparameter from the observed cells of ``d``.

    Parameters
    ----------
    d : PanelDataset
        Only observed cells are used; missing cells never contribute.
    early_window : (int, int), optional
        Inclusive calendar-year range for the start-year prior. Defaults to
        the first eleven years of the grid. With fewer than two complete cases
        inside the window every complete case is used instead (with a warning).

    Raises
    ------
    PriorConstructionError
        If X or Y has no observed consecutive-year difference, or there are
        fewer than two complete cases in the whole panel.
    """
    xv, yv = d.x_values, d.y_values
    xm, ym = d.x_mask, d.y_mask
    dx_var, dx_mean, dx_se, dx_cvar = _diff_moments(xv, xm, "X")
    dy_var, _, dy_se, dy_cvar = _diff_moments(yv, ym, "Y")

    if early_window is None:
        early_window = default_early_window(d)
    lo, hi = int(early_window[0]), int(early_window[1])
    if lo > hi:
        raise ValueError(f"early window {lo}:{hi} is empty")
    both = xm & ym
    in_window = both & ((d.years >= lo) & (d.years <= hi))[None, :]
    if in_window.sum() < 2:
        msg = (f"fewer than 2 complete cases in early window {lo}:{hi}; "
               "using all complete cases for the start-year prior")
        warnings.warn(msg, stacklevel=2)
        log.warning(msg)
        in_window = both
        lo, hi = int(d.years[0]), int(d.years[-1])
    if in_window.sum() < 2:
        raise PriorConstructionError("need at least 2 complete cases for the start-year prior")

    ey, ex = yv[in_window], xv[in_window]
    var_y = _floor(float(np.var(ey, ddof=1)), "var(Y_early)")
    var_x = _floor(float(np.var(ex, ddof=1)), "var(X_early)")
    if np.ptp(ey) > 0 and np.ptp(ex) > 0:
        r = float(np.corrcoef(ey, ex)[0, 1])
    else:
        r = 0.0
    r = float(np.clip(r, -R_CAP, R_CAP))
    cov = float(r * np.sqrt(var_y * var_x))

    return ControlParams(
        delta_X=_floor(dx_var, "delta_X"),
        nu_drift=dx_mean,
        zeta_drift=max(dx_se, np.sqrt(VARIANCE_FLOOR)),
        delta_drift=_floor(dx_cvar, "delta_drift"),
        delta_Y=_floor(dy_var, "delta_Y"),
        zeta_0=max(dy_se, np.sqrt(VARIANCE_FLOOR)),
        delta_0=_floor(dy_cvar, "delta_0"),
        mu_early=(float(ey.mean()), float(ex.mean())),
        sigma_early=((var_y, cov), (cov, var_x)),
        early_window=(lo, hi),
    )
