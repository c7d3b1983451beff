"""Random variate generation: truncated normals, inverse gamma, seeded streams.

The scalar samplers are numba-compiled so the Gibbs kernels in
:mod:`mints.sampler` can call them directly with a ``numpy.random.Generator``.
The public wrappers validate arguments and accept an :class:`RngStream`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "RngStream",
    "sample_trunc_normal",
    "sample_trunc_normal_array",
    "sample_inverse_gamma",
    "sample_trunc_bivariate_normal",
    "norm_cdf",
    "norm_ppf",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
# standardized bound beyond which inverse-CDF is replaced by rejection
_TAIL_SWITCH = 4.0


@dataclass
class RngStream:
    """A reproducible random stream identified by ``(master_seed, stream_id)``.

    Streams with the same identity yield bitwise-identical sequences; distinct
    ``stream_id`` tuples map to independent ``SeedSequence`` children.
    """

    master_seed: int
    stream_id: tuple = ()
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = tuple(int(k) for k in self.stream_id)
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *extra) -> "RngStream":
        return RngStream(self.master_seed, tuple(self.stream_id) + tuple(extra))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# numba scalar kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def norm_cdf(z):
    return 0.5 * math.erfc(-z / _SQRT2)


@njit(cache=True)
def norm_sf(z):
    return 0.5 * math.erfc(z / _SQRT2)


@njit(cache=True)
def norm_ppf(p):
    """Inverse standard normal CDF (Acklam's rational approximation + Halley step)."""
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    a1 = -3.969683028665376e+01
    a2 = 2.209460984245205e+02
    a3 = -2.759285104469687e+02
    a4 = 1.383577518672690e+02
    a5 = -3.066479806614716e+01
    a6 = 2.506628277459239e+00
    b1 = -5.447609879822406e+01
    b2 = 1.615858368580409e+02
    b3 = -1.556989798598866e+02
    b4 = 6.680131188771972e+01
    b5 = -1.328068155288572e+01
    c1 = -7.784894002430293e-03
    c2 = -3.223964580411365e-01
    c3 = -2.400758277161838e+00
    c4 = -2.549732539343734e+00
    c5 = 4.374664141464968e+00
    c6 = 2.938163982698783e+00
    d1 = 7.784695709041462e-03
    d2 = 3.224671290700398e-01
    d3 = 2.445134137142996e+00
    d4 = 3.754408661907416e+00
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) / \
            ((((d1 * q + d2) * q + d3) * q + d4) * q + 1.0)
    elif p <= 1.0 - plow:
        q = p - 0.5
        r = q * q
        x = (((((a1 * r + a2) * r + a3) * r + a4) * r + a5) * r + a6) * q / \
            (((((b1 * r + b2) * r + b3) * r + b4) * r + b5) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) / \
            ((((d1 * q + d2) * q + d3) * q + d4) * q + 1.0)
    e = 0.5 * math.erfc(-x / _SQRT2) - p
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@njit(cache=True)
def _std_tail(rng, a, b):
    # Robert (1995): standard normal restricted to [a, b] with a > 0 large
    width = b - a
    if width < 1.0 / a:
        # narrow window: uniform proposal, density ratio bounded below by exp(-1.5)
        while True:
            z = a + width * rng.random()
            if rng.random() <= math.exp(0.5 * (a * a - z * z)):
                return z
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.standard_exponential() / lam
        if z > b:
            continue
        if rng.random() <= math.exp(-0.5 * (z - lam) * (z - lam)):
            return z


@njit(cache=True)
def _std_trunc(rng, a, b):
    if a > _TAIL_SWITCH:
        return _std_tail(rng, a, b)
    if b < -_TAIL_SWITCH:
        return -_std_tail(rng, -b, -a)
    u = rng.random()
    if a >= 0.0:
        # work with upper tails for precision
        pa = norm_sf(a)
        pb = norm_sf(b)
        q = pa - u * (pa - pb)
        z = -norm_ppf(q)
    else:
        pa = norm_cdf(a)
        pb = norm_cdf(b)
        z = norm_ppf(pa + u * (pb - pa))
    if z < a:
        z = a
    elif z > b:
        z = b
    return z


@njit(cache=True)
def tn_draw(rng, mu, var, low, up):
    """One draw from N(mu, var) restricted to [low, up]; no argument checks."""
    sd = math.sqrt(var)
    a = (low - mu) / sd
    b = (up - mu) / sd
    if a == -np.inf and b == np.inf:
        return mu + sd * rng.standard_normal()
    x = mu + sd * _std_trunc(rng, a, b)
    if x < low:
        x = low
    elif x > up:
        x = up
    return x


@njit(cache=True)
def ig_draw(rng, shape, rate):
    return rate / rng.gamma(shape, 1.0)


@njit(cache=True)
def _tn_fill(rng, mu, var, low, up, out):
    for i in range(out.shape[0]):
        out[i] = tn_draw(rng, mu[i], var[i], low[i], up[i])


# ---------------------------------------------------------------------------
# public wrappers
# ---------------------------------------------------------------------------

def sample_trunc_normal(mu, var, low=-np.inf, up=np.inf, rng=None):
    """Draw from a normal ``N(mu, var)`` truncated to ``[low, up]``.

    Inverse-CDF sampling is used unless the window lies more than four
    standard deviations into one tail, where exponential rejection takes over.

    Raises
    ------
    ValueError
        If ``var <= 0`` or ``low >= up``.
    """
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    if not low < up:
        raise ValueError(f"empty truncation window [{low}, {up}]")
    return float(tn_draw(_as_generator(rng), float(mu), float(var), float(low), float(up)))


def sample_trunc_normal_array(mu, var, low, up, rng):
    """Vectorised :func:`sample_trunc_normal` over broadcastable arguments."""
    mu, var, low, up = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu, var, low, up)))
    if np.any(~(var > 0)):
        raise ValueError("variance must be positive")
    if np.any(~(low < up)):
        raise ValueError("empty truncation window")
    out = np.empty(mu.size)
    _tn_fill(_as_generator(rng), mu.ravel().copy(), var.ravel().copy(),
             low.ravel().copy(), up.ravel().copy(), out)
    return out.reshape(mu.shape)


def sample_inverse_gamma(shape, rate, rng=None, size=None):
    """Inverse-gamma draw with density proportional to ``x^(-shape-1) exp(-rate/x)``."""
    if not (shape > 0 and rate > 0):
        raise ValueError(f"inverse gamma needs shape > 0 and rate > 0, got ({shape}, {rate})")
    gen = _as_generator(rng)
    if size is None:
        return float(ig_draw(gen, float(shape), float(rate)))
    return rate / gen.gamma(shape, 1.0, size=size)


def _check_spd(cov):
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
        raise ValueError("covariance must be a symmetric 2x2 matrix")
    if cov[0, 0] <= 0 or np.linalg.det(cov) <= 0:
        raise ValueError("covariance must be positive definite")
    return cov


def sample_trunc_bivariate_normal(mean, cov, box, rng, inner_sweeps=20, rejection_tries=30):
    """Draw a 2-vector from ``N(mean, cov)`` restricted to a rectangle.

    ``box`` is ``((low0, up0), (low1, up1))``. When only one coordinate is
    truncated the draw is exact (truncated marginal, then normal conditional).
    When both are, plain rejection is tried first with a budget of
    ``rejection_tries`` proposals (a box holding more than 10% of the mass
    fails the whole budget with probability below 0.05); if the budget runs
    out, a fixed number of Gibbs sweeps over the two truncated conditionals is
    run from the mean projected into the box.
    """
    cov = _check_spd(cov)
    mean = np.asarray(mean, dtype=float)
    (l0, u0), (l1, u1) = box
    if not (l0 < u0 and l1 < u1):
        raise ValueError("degenerate truncation box")
    gen = _as_generator(rng)
    free0 = np.isinf(l0) and np.isinf(u0)
    free1 = np.isinf(l1) and np.isinf(u1)
    if free0 and free1:
        return gen.multivariate_normal(mean, cov)
    if free0 or free1:
        k, j = (1, 0) if free0 else (0, 1)
        lo, up = (l1, u1) if free0 else (l0, u0)
        out = np.empty(2)
        out[k] = tn_draw(gen, mean[k], cov[k, k], lo, up)
        cmean = mean[j] + cov[j, k] / cov[k, k] * (out[k] - mean[k])
        cvar = cov[j, j] - cov[j, k] ** 2 / cov[k, k]
        out[j] = cmean + math.sqrt(cvar) * gen.standard_normal()
        return out
    chol = np.linalg.cholesky(cov)
    for _ in range(rejection_tries):
        z = mean + chol @ gen.standard_normal(2)
        if l0 <= z[0] <= u0 and l1 <= z[1] <= u1:
            return z
    z = np.array([min(max(mean[0], l0), u0), min(max(mean[1], l1), u1)])
    for _ in range(inner_sweeps):
        for k, j, lo, up in ((0, 1, l0, u0), (1, 0, l1, u1)):
            cmean = mean[k] + cov[k, j] / cov[j, j] * (z[j] - mean[j])
            cvar = cov[k, k] - cov[k, j] ** 2 / cov[j, j]
            z[k] = tn_draw(gen, cmean, cvar, lo, up)
    return z
