"""Convergence and mixing diagnostics for MCMC output."""

from __future__ import annotations

import numpy as np

__all__ = ["DiagnosticError", "gelman_rubin", "lag1_autocorrelation"]


class DiagnosticError(ValueError):
    pass


def gelman_rubin(traces, split=True):
    """Potential scale reduction factor (R-hat) per monitored quantity.

    Parameters
    ----------
    traces : array_like, shape (m, n) or (m, n, k)
        ``m`` chains of length ``n`` for ``k`` scalars.
    split : bool
        Split each chain into halves first (split-R-hat), which also flags
        within-chain drift.

    Returns
    -------
    float or ndarray
        ``max(1, R-hat)``; ``inf`` when chains are individually constant but
        disagree, ``1.0`` when every draw is identical.
    """
    a = np.asarray(traces, dtype=float)
    scalar = a.ndim == 2
    if scalar:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DiagnosticError("traces must be (chains, draws) or (chains, draws, k)")
    m, n, _ = a.shape
    if m < 2:
        raise DiagnosticError("PSRF needs at least two chains")
    if n < 10:
        raise DiagnosticError(f"PSRF needs at least 10 draws per chain, got {n}")
    if split:
        half = n // 2
        a = np.concatenate([a[:, :half], a[:, n - half:]], axis=0)
        n = half
    means = a.mean(axis=1)
    W = a.var(axis=1, ddof=1).mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * W + B / n
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.sqrt(var_plus / W)
    R = np.where(W > 0, R, np.where(B > 0, np.inf, 1.0))
    R = np.maximum(R, 1.0)
    return float(R[0]) if scalar else R


def lag1_autocorrelation(series):
    """Lag-1 sample autocorrelation along the last axis (NaN for constant input)."""
    x = np.asarray(series, dtype=float)
    if x.shape[-1] < 3:
        return np.full(x.shape[:-1], np.nan) if x.ndim > 1 else np.nan
    d = x - x.mean(axis=-1, keepdims=True)
    num = np.sum(d[..., 1:] * d[..., :-1], axis=-1)
    den = np.sum(d * d, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / den, np.nan)
    return float(out) if np.ndim(out) == 0 else out
