"""Point and interval accuracy scores for held-out cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ScoreReport", "score_predictions", "interval_score", "mae"]

PENALTY = 2 / 0.05


@dataclass(frozen=True)
class ScoreReport:
    mae: float
    coverage: float
    mean_width: float
    interval_score: float
    n: int

    def as_row(self) -> dict:
        return {"MAE": self.mae, "Cvg": self.coverage, "Width": self.mean_width,
                "IS": self.interval_score, "n": self.n}


def _arrays(*xs):
    arrs = [np.asarray(x, dtype=float).ravel() for x in xs]
    if len({a.size for a in arrs}) != 1:
        raise ValueError("inputs must have equal lengths")
    return arrs


def mae(truths, predictions) -> float:
    t, p = _arrays(truths, predictions)
    return float(np.mean(np.abs(t - p)))


def interval_score(truths, lows, ups, distance_weighted=False) -> float:
    """Mean interval score of central 95% intervals.

    By default a miss costs a flat 2/0.05 = 40 on top of the width. With
    ``distance_weighted`` the penalty is 40 times the distance to the
    violated endpoint instead.
    """
    x, lo, up = _arrays(truths, lows, ups)
    if np.any(lo > up):
        raise ValueError("every interval needs low <= up")
    below, above = x < lo, x > up
    if distance_weighted:
        pen = PENALTY * ((lo - x) * below + (x - up) * above)
    else:
        pen = PENALTY * (below.astype(float) + above.astype(float))
    return float(np.mean((up - lo) + pen))


def score_predictions(truths, medians, lows, ups, distance_weighted=False) -> ScoreReport:
    """MAE of the medians plus coverage, width and interval score of [low, up]."""
    x, med, lo, up = _arrays(truths, medians, lows, ups)
    if x.size == 0:
        raise ValueError("nothing to score")
    inside = (x >= lo) & (x <= up)
    return ScoreReport(
        mae=float(np.mean(np.abs(x - med))),
        coverage=float(inside.mean()),
        mean_width=float(np.mean(up - lo)),
        interval_score=interval_score(x, lo, up, distance_weighted),
        n=int(x.size),
    )
