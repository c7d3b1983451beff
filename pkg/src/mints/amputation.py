"""Simulated missingness (MCAR, MAR, MNAR) on top of an existing panel.

Every mechanism assigns each currently observed cell a score ``A`` and removes
the ``round(rate * n)`` cells with the smallest scores, so the amputed count
is exact. Scores are

* MCAR: ``A ~ U(0, 1)`` (a uniformly random subset of the required size),
* MAR: ``A ~ N(t, sd^2)`` with ``t`` the year offset, so early years go first,
* MNAR: ``A ~ N(value, sd^2)``, so small values go first.

X and Y are amputed independently, each among its own observed cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mints.distributions import RngStream
from mints.panel import PanelDataset

MECHANISMS = ("MCAR", "MAR", "MNAR")

# (sd for X, sd for Y) per data context
NOISE_DEFAULTS = {
    "simulated": {"MAR": (10.0, 10.0), "MNAR": (40.0, 40.0)},
    "enrollment": {"MAR": (40.0, 40.0), "MNAR": (25.0, 15.0)},
}


@dataclass(frozen=True)
class AmputationPlan:
    mechanism: str
    rate: float
    noise_sd_x: float | None = None
    noise_sd_y: float | None = None
    context: str = "simulated"
    seed: int = 0
    variables: tuple = ("x", "y")

    def __post_init__(self):
        mech = self.mechanism.upper()
        if mech not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        object.__setattr__(self, "mechanism", mech)
        if not 0 < self.rate < 1:
            raise ValueError(f"rate must lie in (0, 1), got {self.rate}")
        if self.context not in NOISE_DEFAULTS:
            raise ValueError(f"unknown context {self.context!r}")
        if set(self.variables) - {"x", "y"}:
            raise ValueError("variables must be a subset of ('x', 'y')")
        for sd in (self.noise_sd_x, self.noise_sd_y):
            if sd is not None and not sd > 0:
                raise ValueError("noise SDs must be positive")

    def noise_sd(self, variable: str) -> float:
        given = self.noise_sd_x if variable == "x" else self.noise_sd_y
        if given is not None:
            return float(given)
        if self.mechanism == "MCAR":
            return float("nan")
        sx, sy = NOISE_DEFAULTS[self.context][self.mechanism]
        return sx if variable == "x" else sy


@dataclass(frozen=True)
class SplitDataset:
    """Full data, its amputed training copy and the three cell sets per variable."""

    full: PanelDataset
    training: PanelDataset
    test_x: np.ndarray
    test_y: np.ndarray
    plan: AmputationPlan

    @property
    def started_missing_x(self):
        return ~self.full.x_mask

    @property
    def started_missing_y(self):
        return ~self.full.y_mask

    @property
    def observed_x(self):
        return self.training.x_mask

    @property
    def observed_y(self):
        return self.training.y_mask

    def manifest(self):
        """Rows ``(variable, country, year, true_value)`` of every test cell."""
        rows = []
        for var, mask, vals in (("x", self.test_x, self.full.x_values),
                                ("y", self.test_y, self.full.y_values)):
            for c, t in zip(*np.nonzero(mask)):
                rows.append((var, self.full.country_ids[c], int(self.full.years[t]), float(vals[c, t])))
        return rows


def n_to_ampute(rate, n) -> int:
    return int(np.floor(rate * n + 0.5))


def lowest_scores(scores, eligible, k):
    """Mask of the ``k`` eligible cells with the smallest scores.

    Ties are broken by row-major (country, year) order.
    """
    flat_idx = np.flatnonzero(eligible.ravel())
    order = np.argsort(scores.ravel()[flat_idx], kind="stable")
    out = np.zeros(eligible.size, dtype=bool)
    out[flat_idx[order[:k]]] = True
    return out.reshape(eligible.shape)


def missingness_scores(values, mechanism, sd, rng):
    shape = values.shape
    if mechanism == "MCAR":
        return rng.random(shape)
    if mechanism == "MAR":
        t = np.broadcast_to(np.arange(1, shape[1] + 1, dtype=float), shape)
        return t + sd * rng.standard_normal(shape)
    return np.nan_to_num(values) + sd * rng.standard_normal(shape)


def ampute(d: PanelDataset, plan: AmputationPlan) -> SplitDataset:
    """Remove a ``plan.rate`` fraction of the observed cells of each variable."""
    new = {}
    tests = {}
    for idx, var in enumerate(("x", "y")):
        values = d.x_values if var == "x" else d.y_values
        mask = ~np.isnan(values)
        test = np.zeros_like(mask)
        if var in plan.variables:
            rng = RngStream(plan.seed, (idx + 1,)).generator
            scores = missingness_scores(values, plan.mechanism, plan.noise_sd(var), rng)
            test = lowest_scores(scores, mask, n_to_ampute(plan.rate, int(mask.sum())))
        tests[var] = test
        new[var] = np.where(test, np.nan, values)
    training = d.with_values(new["x"], new["y"])
    return SplitDataset(d, training, tests["x"], tests["y"], plan)
