"""Rubin's combining rules for a scalar estimand."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = ["PooledEstimate", "pool", "PoolingError"]

FMI_EXPLORATORY_BELOW = 100


class PoolingError(ValueError):
    pass


@dataclass(frozen=True)
class PooledEstimate:
    q_bar: float
    u_bar: float
    b: float
    t_total: float
    r_m: float
    nu: float
    fmi: float
    ci: tuple
    m: int
    level: float = 0.95
    between_zero: bool = False

    @property
    def se(self) -> float:
        return math.sqrt(self.t_total)

    @property
    def fmi_exploratory(self) -> bool:
        return self.m < FMI_EXPLORATORY_BELOW

    def covers(self, value) -> bool:
        return self.ci[0] <= value <= self.ci[1]

    def as_row(self) -> dict:
        return {
            "m": self.m, "q_bar": self.q_bar, "u_bar": self.u_bar, "b": self.b,
            "t_total": self.t_total, "r_m": self.r_m, "nu": self.nu, "fmi": self.fmi,
            "ci_low": self.ci[0], "ci_high": self.ci[1], "level": self.level,
            "between_zero": int(self.between_zero),
            "fmi_note": "exploratory" if self.fmi_exploratory else "",
        }


def pool(q_hats, u_hats, level=0.95) -> PooledEstimate:
    """Combine ``M`` point estimates and their variances.

    Parameters
    ----------
    q_hats, u_hats : array_like
        Per-imputation estimates and their (squared standard error) variances.
    level : float
        Confidence level of the t interval.

    Notes
    -----
    With zero between-imputation variance the relative increase is 0, the
    degrees of freedom are infinite, the interval uses the normal critical
    value, and FMI is reported as 0 with ``between_zero`` set.
    """
    q = np.asarray(q_hats, dtype=float).ravel()
    u = np.asarray(u_hats, dtype=float).ravel()
    m = q.size
    if m < 2:
        raise PoolingError(f"need at least 2 imputations, got {m}")
    if u.size != m:
        raise PoolingError("q_hats and u_hats differ in length")
    if np.any(u < 0) or not np.all(np.isfinite(u)) or not np.all(np.isfinite(q)):
        raise PoolingError("variances must be finite and nonnegative; estimates finite")
    if not 0 < level < 1:
        raise PoolingError("level must lie in (0, 1)")

    q_bar = float(q.mean())
    u_bar = float(u.mean())
    b = float(q.var(ddof=1))
    t_total = u_bar + (1 + 1 / m) * b
    alpha = 1 - level
    if b == 0:
        r_m, nu, fmi = 0.0, math.inf, 0.0
        crit = float(stats.norm.ppf(1 - alpha / 2))
    else:
        r_m = (1 + 1 / m) * b / u_bar if u_bar > 0 else math.inf
        nu = (m - 1) * (1 + 1 / r_m) ** 2
        fmi = (r_m + 2 / (nu + 3)) / (r_m + 1) if math.isfinite(r_m) else 1.0
        crit = float(stats.t.ppf(1 - alpha / 2, nu))
    half = crit * math.sqrt(t_total)
    return PooledEstimate(q_bar, u_bar, b, t_total, r_m, nu, fmi,
                          (q_bar - half, q_bar + half), m, level, b == 0)
