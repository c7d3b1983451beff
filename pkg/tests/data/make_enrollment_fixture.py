"""Build enrollment_shaped.csv: 202 countries x 51 years (1970-2020).

GER (x) rises along a drifting random walk and NER (y) tracks it with a trend
change near GER = 100. Missing cells are chosen so that exactly 7520 NER and
3874 GER cells are empty (fractions 0.730 and 0.376); every country keeps at
least one GER value.
"""

import csv
from pathlib import Path

import numpy as np

C, T, START = 202, 51, 1970
N_MISS_Y, N_MISS_X = 7520, 3874


def build(seed=20240101):
    g = np.random.default_rng(seed)
    x = np.empty((C, T))
    x[:, 0] = g.uniform(5, 90, C)
    drift = g.uniform(0.2, 2.5, C)
    for t in range(1, T):
        x[:, t] = np.clip(x[:, t - 1] + drift + g.normal(0, 1.5, C), 0.5, 150)
    base = np.where(x < 100, 0.9 * x, 90 + 0.05 * (x - 100))
    y = np.clip(base + g.normal(0, 2.5, (C, T)), 0, None)
    y = np.minimum(y, np.minimum(x, 100))

    # every country keeps its first GER value; remaining GER cells drawn at random
    cand = np.flatnonzero((np.arange(T) > 0)[None, :].repeat(C, 0).ravel())
    miss_x = np.zeros(C * T, bool)
    miss_x[g.choice(cand, N_MISS_X, replace=False)] = True
    miss_y = np.zeros(C * T, bool)
    miss_y[g.choice(C * T, N_MISS_Y, replace=False)] = True
    x = np.where(miss_x.reshape(C, T), np.nan, x)
    y = np.where(miss_y.reshape(C, T), np.nan, y)
    return x, y


def write(path):
    x, y = build()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "year", "x", "y"])
        for c in range(C):
            for t in range(T):
                fx = "" if np.isnan(x[c, t]) else f"{x[c, t]:.4f}"
                fy = "" if np.isnan(y[c, t]) else f"{y[c, t]:.4f}"
                w.writerow([f"K{c:03d}", START + t, fx, fy])


if __name__ == "__main__":
    write(Path(__file__).with_name("enrollment_shaped.csv"))
