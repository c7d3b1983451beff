"""The MINTS sampler: chain initialisation, sweeps, tuning, convergence and harvest.

The per-step conditionals live in :mod:`mints._kernels` (compiled); this
module owns state containers, configuration and the estimation/imputation
phases. Each public step wrapper exists so a single conditional can be
exercised on a frozen state.
"""

from __future__ import annotations

import copy
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mints import _kernels as K
from mints.diagnostics import gelman_rubin, lag1_autocorrelation
from mints.distributions import (RngStream, _as_generator, sample_inverse_gamma,
                                 sample_trunc_bivariate_normal)
from mints.panel import PanelDataset, complete_cases
from mints.priors import BETA_PRIOR_VAR, ControlParams, compute_control_params
from mints.splines import SplinePair, estimate_f_h

log = logging.getLogger(__name__)

BASE_COV = np.array([[0.001475944, -0.001511349],
                     [-0.001511349, 0.001577437]])
TRACE_NAMES = ("beta", "rho", "sigma_X2", "sigma_Y2", "mu_drift", "mu_0")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# model, state, tuning
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Model:
    """Data, fitted splines and control parameters, packed for the kernels."""

    data: PanelDataset
    splines: SplinePair
    cp: ControlParams
    obs: np.ndarray = field(init=False, repr=False)
    B: np.ndarray = field(init=False, repr=False)
    B0: np.ndarray = field(init=False, repr=False)
    cp_array: np.ndarray = field(init=False, repr=False)
    spline_arrays: tuple = field(init=False, repr=False)

    def __post_init__(self):
        d = self.data
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("obs", np.stack([d.x_mask, d.y_mask]))
        set_("B", np.stack(d.bounds.grids(d.shape)))
        set_("B0", np.stack(d.start_bounds()))
        set_("cp_array", self.cp.as_array())
        f, h = self.splines.f, self.splines.h
        set_("spline_arrays", (f.knots, f.coefficients, np.array(f.range_clip),
                               h.knots, h.coefficients, np.array(h.range_clip)))

    @property
    def track(self) -> bool:
        return bool(self.data.bounds.y_up_tracks_x)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.data.shape))

    def missing_cells(self) -> np.ndarray:
        """Flat indices into the stacked (X, Y) grids of every missing cell."""
        return np.flatnonzero(~self.obs.ravel()).astype(np.int64)

    def f(self, x):
        return self.splines.f(x)

    def h(self, x):
        return self.splines.h(x)


def _par_property(i, doc):
    def get(self):
        return float(self.par[i])

    def set_(self, value):
        self.par[i] = value

    return property(get, set_, doc=doc)


@dataclass
class ChainState:
    """Mutable state of one chain.

    ``G`` stacks the X grid, Y grid and cached f(X), h(X); ``cvec`` stacks
    X_0, Y_0, gamma and alpha per country.
    """

    G: np.ndarray
    cvec: np.ndarray
    par: np.ndarray
    rng: np.random.Generator
    counters: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    iteration: int = 0

    sigma_X2 = _par_property(K.SX2, "random-walk innovation variance")
    mu_drift = _par_property(K.MU_DRIFT, "mean of the country drifts")
    sigma_drift2 = _par_property(K.S_DRIFT2, "variance of the country drifts")
    beta = _par_property(K.BETA, "coefficient on f(X)")
    rho = _par_property(K.RHO, "autoregressive coefficient, in [0, 1]")
    sigma_Y2 = _par_property(K.SY2, "Y innovation scale")
    mu_0 = _par_property(K.MU0, "mean of the country intercepts")
    sigma_0_2 = _par_property(K.S0_2, "variance of the country intercepts")

    @property
    def x_grid(self):
        return self.G[0]

    @property
    def y_grid(self):
        return self.G[1]

    @property
    def x0(self):
        return self.cvec[K.X0]

    @property
    def y0(self):
        return self.cvec[K.Y0]

    @property
    def gamma(self):
        return self.cvec[K.GAMMA]

    @property
    def alpha(self):
        return self.cvec[K.ALPHA]

    def refresh(self, model: Model):
        """Recompute the cached f(X) and h(X) after editing the X grid."""
        for c in range(self.G.shape[1]):
            K.refresh_fh(self.G, c, *model.spline_arrays)
        return self

    def copy(self) -> "ChainState":
        return copy.deepcopy(self)


@dataclass
class ProposalTuning:
    phi: float = 1.0
    base_cov: np.ndarray = field(default_factory=lambda: BASE_COV.copy())
    acceptance_target: float = 0.40
    pilot_acceptance: float = float("nan")

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("phi must be positive")

    def as_array(self) -> np.ndarray:
        c = np.asarray(self.base_cov, dtype=float)
        return np.array([self.phi, c[0, 0], c[0, 1], c[1, 1]])


@dataclass
class RunConfig:
    """Chain counts and phase lengths.

    ``n_imputation_iters`` defaults to ``M / n_chains * n_thin``; if given it
    must reproduce ``M`` harvests. With ``pool_all`` every imputation-phase
    sweep is kept instead (``pool_iters`` per chain) and ``M`` is ignored.
    """

    n_chains: int = 10
    M: int = 40
    n_thin: int = 1000
    n_imputation_iters: int | None = None
    block_iters: int = 5000
    max_iters: int = 50000
    psrf_threshold: float = 1.1
    pilot_iters: int = 4000
    phi0: float = 1.0
    acceptance_target: float = 0.40
    jitter_sd: float = 0.5
    init_inflation: float = 10.0
    n_monitor_cells: int = 5
    pool_all: bool = False
    pool_iters: int = 5000
    jobs: int = 1

    def imputation_iters(self) -> int:
        if self.pool_all:
            return self.pool_iters
        if self.n_imputation_iters is not None:
            return int(self.n_imputation_iters)
        return self.M // self.n_chains * self.n_thin

    def validate(self):
        if self.n_chains < 1 or self.n_thin < 1 or self.M < 1:
            raise ConfigError("n_chains, n_thin and M must be positive")
        if self.block_iters < 10 or self.max_iters < self.block_iters:
            raise ConfigError("need block_iters >= 10 and max_iters >= block_iters")
        if self.pilot_iters < 500:
            raise ConfigError("pilot_iters must be at least 500")
        if self.pool_all:
            if self.pool_iters < 1:
                raise ConfigError("pool_iters must be positive")
            return self
        if self.n_imputation_iters is None:
            if self.M % self.n_chains:
                raise ConfigError(f"M={self.M} is not a multiple of n_chains={self.n_chains}")
        else:
            n_imp = int(self.n_imputation_iters)
            if n_imp % self.n_thin or self.n_chains * (n_imp // self.n_thin) != self.M:
                raise ConfigError(
                    f"M={self.M} != n_chains x harvests = {self.n_chains} x "
                    f"{n_imp // self.n_thin} (n_imputation_iters={n_imp}, n_thin={self.n_thin})")
        return self


# --------------------------------------------------------------------------
# initialisation
# --------------------------------------------------------------------------

def _interp_rows(values, mask, fallback):
    """Within-row linear interpolation with constant extrapolation."""
    out = np.empty_like(values)
    t = np.arange(values.shape[1])
    for c in range(values.shape[0]):
        m = mask[c]
        if m.any():
            out[c] = np.interp(t, t[m], values[c, m])
        else:
            out[c] = fallback[c]
    return out


def initial_grids(model: Model):
    """Deterministic starting grids before jitter."""
    d = model.data
    xm, ym = d.x_mask, d.y_mask
    # countries without any observed X start from the per-year cross-country mean
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        col = np.nanmean(d.x_values, axis=0)
    col = np.where(np.isnan(col), np.nanmean(d.x_values) if xm.any() else 0.0, col)
    x = _interp_rows(np.nan_to_num(d.x_values), xm, np.broadcast_to(col, d.shape))
    if model.track:
        x = np.where(ym & ~xm, np.maximum(x, np.nan_to_num(d.y_values)), x)
    fx = model.f(x)
    y_interp = _interp_rows(np.nan_to_num(d.y_values), ym, fx)
    y = np.where(xm, fx, y_interp)
    return np.where(xm, d.x_values, x), np.where(ym, d.y_values, y)


def _clip_grids(model: Model, x, y):
    lo = model.B[0].copy()
    if model.track:
        lo = np.where(model.obs[1] & ~model.obs[0], np.maximum(lo, np.nan_to_num(model.data.y_values)), lo)
    x = np.where(model.obs[0], x, np.clip(x, lo, model.B[1]))
    up = model.data.bounds.y_upper(x, model.B[3])
    y = np.where(model.obs[1], y, np.clip(y, model.B[2], up))
    return x, y


def initialize_chain(model: Model, rng, jitter_sd=0.5, inflate=10.0) -> ChainState:
    """Diffuse starting state for one chain.

    Missing cells start from interpolated / spline-predicted values plus
    ``N(0, jitter_sd^2)`` noise, clipped to their bounds. Parameters are drawn
    from their priors with every normal variance multiplied by ``inflate``.
    """
    gen = _as_generator(rng)
    cp = model.cp
    C, T = model.data.shape
    x, y = initial_grids(model)
    x = np.where(model.obs[0], x, x + jitter_sd * gen.standard_normal((C, T)))
    y = np.where(model.obs[1], y, y + jitter_sd * gen.standard_normal((C, T)))
    x, y = _clip_grids(model, x, y)

    ca = model.cp_array
    par = np.empty(K.N_PAR)
    par[K.SX2] = sample_inverse_gamma(2.0, cp.delta_X, gen)
    par[K.MU_DRIFT] = gen.normal(cp.nu_drift, math.sqrt(inflate * ca[2]))
    par[K.S_DRIFT2] = sample_inverse_gamma(2.0, cp.delta_drift, gen)
    par[K.SY2] = sample_inverse_gamma(2.0, cp.delta_Y, gen)
    par[K.MU0] = gen.normal(cp.nu_0, math.sqrt(inflate * ca[6]))
    par[K.S0_2] = sample_inverse_gamma(2.0, cp.delta_0, gen)
    par[K.BETA] = gen.normal(0.0, math.sqrt(inflate * BETA_PRIOR_VAR))
    par[K.RHO] = gen.random()

    cvec = np.empty((4, C))
    cvec[K.GAMMA] = gen.normal(par[K.MU_DRIFT], math.sqrt(inflate * par[K.S_DRIFT2]), C)
    cvec[K.ALPHA] = gen.normal(par[K.MU0], math.sqrt(inflate * par[K.S0_2]), C)
    cov = inflate * np.asarray(cp.sigma_early, dtype=float)
    for c in range(C):
        lo_x, up_x, lo_y, up_y = model.B0[:, c]
        if up_x > lo_x and up_y > lo_y:
            y0, x0 = sample_trunc_bivariate_normal(cp.mu_early, cov, ((lo_y, up_y), (lo_x, up_x)), gen)
        else:
            y0, x0 = lo_y, lo_x
        cvec[K.Y0, c], cvec[K.X0, c] = y0, x0

    G = np.empty((4, C, T))
    G[0], G[1] = x, y
    state = ChainState(G, cvec, par, gen)
    return state.refresh(model)


# --------------------------------------------------------------------------
# single steps and sweeps
# --------------------------------------------------------------------------

def step_sigma_y(s: ChainState, model: Model):
    K.step_sigma_y(s.rng, s.G, s.cvec, s.par, model.cp_array)
    return s


def step_sigma_x(s: ChainState, model: Model):
    K.step_sigma_x(s.rng, s.G, s.cvec, s.par, model.cp_array)
    return s


def step_variances(s: ChainState, model: Model):
    """Draw sigma_Y^2 then sigma_X^2 from their inverse-gamma conditionals."""
    return step_sigma_x(step_sigma_y(s, model), model)


def step_beta_rho(s: ChainState, model: Model, tuning: ProposalTuning) -> bool:
    """Metropolis update of the (beta, rho) block; returns whether it moved."""
    before = s.counters[K.ACC]
    K.step_beta_rho(s.rng, s.G, s.cvec, s.par, tuning.as_array(), s.counters)
    return bool(s.counters[K.ACC] > before)


def step_drift(s: ChainState, model: Model):
    K.step_drift_hyper(s.rng, s.cvec, s.par, model.cp_array)
    K.step_gamma(s.rng, s.G, s.cvec, s.par)
    return s


def step_intercepts(s: ChainState, model: Model):
    K.step_intercept_hyper(s.rng, s.cvec, s.par, model.cp_array)
    K.step_alpha(s.rng, s.G, s.cvec, s.par)
    return s


def impute_x_sweep(s: ChainState, model: Model):
    K.impute_x(s.rng, s.G, model.obs, s.cvec, s.par, model.B, model.track,
               s.counters, *model.spline_arrays)
    K.step_x0(s.rng, s.G, s.cvec, s.par, model.cp_array, model.B0, s.counters)
    return s


def impute_y_sweep(s: ChainState, model: Model):
    K.impute_y(s.rng, s.G, model.obs, s.cvec, s.par, model.B, model.track, s.counters)
    K.step_y0(s.rng, s.G, s.cvec, s.par, model.cp_array, model.B0, s.counters)
    return s


def gibbs_sweep(s: ChainState, model: Model, tuning: ProposalTuning) -> ChainState:
    """One full iteration: variances, (beta, rho), hierarchies, then imputation."""
    K.sweep(s.rng, s.G, model.obs, s.cvec, s.par, model.cp_array, tuning.as_array(),
            s.counters, model.B, model.B0, model.track, *model.spline_arrays)
    s.iteration += 1
    return s


def run_sweeps(s: ChainState, model: Model, tuning: ProposalTuning, n_iter: int,
               trace_cells=None, record_trace=True, thin=0, rec_cells=None,
               adapt=False, adapt_offset=0):
    """Advance ``s`` by ``n_iter`` sweeps in compiled code.

    Returns ``(trace, rec)``: per-sweep monitored scalars (``None`` if
    ``record_trace`` is off) and the values at ``rec_cells`` every ``thin``
    sweeps. When tracing, the last column holds the running count of
    accepted (beta, rho) moves. With ``adapt`` the tuning's ``phi`` is
    updated in place.
    """
    tc = np.zeros(0, np.int64) if trace_cells is None else np.asarray(trace_cells, np.int64)
    rc = np.zeros(0, np.int64) if rec_cells is None else np.asarray(rec_cells, np.int64)
    width = K.N_TRACE_PAR + tc.size
    rows = n_iter if record_trace else 0
    trace = np.empty((rows, width + 1))
    acc = np.empty(rows, np.int64)
    n_rec = n_iter // thin if thin > 0 else 0
    rec = np.empty((n_rec, rc.size))
    prop = tuning.as_array()
    K.run(s.rng, s.G, model.obs, s.cvec, s.par, model.cp_array, prop, s.counters,
          model.B, model.B0, model.track, *model.spline_arrays,
          int(n_iter), bool(adapt), float(adapt_offset), float(tuning.acceptance_target),
          trace, tc, acc, int(thin), rc, rec)
    trace[:, width] = acc
    if adapt:
        tuning.phi = float(prop[0])
    s.iteration += n_iter
    return (trace if record_trace else None), rec


def _advance(job):
    # process-pool entry point; must stay at module level to pickle
    s, model, tuning, n_iter, kw = job
    trace, rec = run_sweeps(s, model, tuning, n_iter, **kw)
    return s, trace, rec


def _map_chains(jobs, n_workers):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as ex:
            return list(ex.map(_advance, jobs))
    return [_advance(j) for j in jobs]


# --------------------------------------------------------------------------
# tuning, estimation, imputation
# --------------------------------------------------------------------------

def tune_phi(model: Model, rng, pilot_iters=4000, phi0=1.0, target=0.40,
             jitter_sd=0.5, inflate=10.0) -> ProposalTuning:
    """Robbins-Monro adaptation of phi on a pilot chain, then frozen.

    The first half of the pilot doubles as burn-in; the step-size schedule
    restarts for the second half so phi settles on the stationary region.
    ``pilot_acceptance`` is the acceptance rate over that second half.
    """
    if pilot_iters < 500:
        raise ConfigError("pilot_iters must be at least 500")
    tuning = ProposalTuning(phi=phi0, acceptance_target=target)
    s = initialize_chain(model, rng, jitter_sd, inflate)
    first = pilot_iters // 2
    run_sweeps(s, model, tuning, first, record_trace=False, adapt=True)
    acc0, prop0 = s.counters[K.ACC], s.counters[K.PROPOSED]
    run_sweeps(s, model, tuning, pilot_iters - first, record_trace=False, adapt=True)
    rate = (s.counters[K.ACC] - acc0) / max(s.counters[K.PROPOSED] - prop0, 1)
    tuning.pilot_acceptance = float(rate)
    if not 0.25 <= rate <= 0.55:
        msg = f"pilot acceptance {rate:.3f} outside [0.25, 0.55]; keeping phi={tuning.phi:.4g}"
        warnings.warn(msg, stacklevel=2)
        log.warning(msg)
    return tuning


@dataclass
class EstimationResult:
    states: list
    traces: np.ndarray          # (chains, iterations, monitored)
    monitor_names: tuple
    psrf: dict
    iterations: int
    converged: bool
    acceptance: float           # over the retained second half
    acceptance_all: float       # including burn-in

    def retained(self) -> np.ndarray:
        """Second-half draws pooled over chains, shape (draws, monitored)."""
        return self.traces[:, self.iterations // 2:].reshape(-1, self.traces.shape[2])


def monitor_cells(model: Model, rng, n=5) -> np.ndarray:
    mis = model.missing_cells()
    if mis.size <= n:
        return mis
    return np.sort(_as_generator(rng).choice(mis, size=n, replace=False))


def _cell_name(model: Model, flat):
    C, T = model.data.shape
    v, r = divmod(int(flat), C * T)
    c, t = divmod(r, T)
    return f"{'xy'[v]}[{model.data.country_ids[c]},{int(model.data.years[t])}]"


def estimate(model: Model, tuning: ProposalTuning, config: RunConfig,
             seed: int, replication: int = 0, states=None) -> EstimationResult:
    """Run chains in blocks until the largest split-PSRF drops below threshold.

    The PSRF after each block uses the second half of all sweeps so far; the
    first half is treated as burn-in, and the reported acceptance rate covers
    the second half only.
    """
    if states is None:
        states = [initialize_chain(model, RngStream(seed, (replication, 1, k)),
                                   config.jitter_sd, config.init_inflation)
                  for k in range(config.n_chains)]
    cells = monitor_cells(model, RngStream(seed, (replication, 2, 0)), config.n_monitor_cells)
    names = TRACE_NAMES + tuple(_cell_name(model, f) for f in cells)
    acc0 = sum(int(s.counters[K.ACC]) for s in states)
    prop0 = sum(int(s.counters[K.PROPOSED]) for s in states)
    blocks = []
    total = 0
    while True:
        n = min(config.block_iters, config.max_iters - total)
        jobs = [(s, model, tuning, n, dict(trace_cells=cells)) for s in states]
        out = _map_chains(jobs, config.jobs)
        states = [o[0] for o in out]
        blocks.append(np.stack([o[1] for o in out]))
        total += n
        traces = np.concatenate(blocks, axis=1)[:, :, :-1]
        if len(states) >= 2:
            r = gelman_rubin(traces[:, total // 2:], split=True)
            psrf = dict(zip(names, map(float, r)))
            converged = max(psrf.values()) < config.psrf_threshold
        else:
            psrf, converged = {}, True
        log.info("estimation: %d sweeps, max PSRF %.4f", total,
                 max(psrf.values()) if psrf else float("nan"))
        if converged or total >= config.max_iters:
            break
    if not converged:
        msg = f"PSRF above {config.psrf_threshold} after {total} sweeps (max {max(psrf.values()):.3f})"
        warnings.warn(msg, stacklevel=2)
        log.warning(msg)
    acc = sum(int(s.counters[K.ACC]) for s in states) - acc0
    prop = sum(int(s.counters[K.PROPOSED]) for s in states) - prop0
    counts = np.concatenate(blocks, axis=1)[:, :, -1]
    half = total // 2
    kept = float(np.sum(counts[:, -1] - counts[:, half - 1])) / (len(states) * (total - half))
    return EstimationResult(states, traces, names, psrf, total, converged, kept, acc / max(prop, 1))


@dataclass
class ImputationResult:
    """Harvested draws at every missing cell.

    ``draws`` has shape ``(chains, harvests, n_missing)`` and is aligned with
    ``cells`` (flat indices into the stacked X/Y grids).
    """

    model: Model
    cells: np.ndarray
    draws: np.ndarray
    lag1_autocorrelation: float
    acceptance: float
    degenerate: tuple

    @property
    def M(self) -> int:
        return self.draws.shape[0] * self.draws.shape[1]

    def completed(self, index: int):
        """The ``index``-th completed dataset as ``(x_grid, y_grid)`` (chain-major order)."""
        ch, h = divmod(index, self.draws.shape[1])
        d = self.model.data
        grids = np.stack([d.x_values, d.y_values]).copy().reshape(-1)
        grids[self.cells] = self.draws[ch, h]
        grids = grids.reshape((2,) + d.shape)
        return grids[0], grids[1]

    def completed_datasets(self):
        return [self.completed(i) for i in range(self.M)]

    def pooled_draws(self) -> np.ndarray:
        return self.draws.reshape(-1, self.cells.size)

    def cell_quantiles(self, probs=(0.025, 0.5, 0.975)):
        """Posterior-predictive quantiles per missing cell, shape (len(probs), n_missing)."""
        return np.quantile(self.pooled_draws(), probs, axis=0)

    def bound_violations(self) -> int:
        return sum(count_bound_violations(self.model, x, y) for x, y in self.completed_datasets())


def count_bound_violations(model: Model, x, y) -> int:
    """Cells of a completed dataset outside their truncation windows."""
    x_low, x_up, y_low, y_cap = model.B
    up = model.data.bounds.y_upper(x, y_cap)
    bad = (x < x_low) | (x > x_up) | (y < y_low) | (y > up)
    bad |= ~np.isfinite(x) | ~np.isfinite(y)
    return int(bad.sum())


def run_imputation(states, model: Model, tuning: ProposalTuning, config: RunConfig) -> ImputationResult:
    """Advance converged chains and harvest every ``n_thin``-th state.

    In ``pool_all`` mode every sweep is harvested instead.
    """
    config.validate()
    n_iter = config.imputation_iters()
    thin = 1 if config.pool_all else config.n_thin
    cells = model.missing_cells()
    acc0 = [int(s.counters[K.ACC]) for s in states]
    prop0 = [int(s.counters[K.PROPOSED]) for s in states]
    jobs = [(s, model, tuning, n_iter, dict(record_trace=False, thin=thin, rec_cells=cells))
            for s in states]
    out = _map_chains(jobs, config.jobs)
    new_states = [o[0] for o in out]
    states[:] = new_states
    draws = np.stack([o[2] for o in out])
    if not config.pool_all and draws.shape[0] * draws.shape[1] != config.M:
        raise ConfigError(f"harvested {draws.shape[0] * draws.shape[1]} datasets, expected M={config.M}")
    lag1 = float("nan")
    if draws.shape[1] >= 3 and cells.size:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ac = lag1_autocorrelation(np.swapaxes(draws, 1, 2))
            lag1 = float(np.nanmean(ac)) if np.isfinite(ac).any() else float("nan")
    acc = sum(int(s.counters[K.ACC]) for s in new_states) - sum(acc0)
    prop = sum(int(s.counters[K.PROPOSED]) for s in new_states) - sum(prop0)
    degen = (sum(int(s.counters[K.DEGEN_X]) for s in new_states),
             sum(int(s.counters[K.DEGEN_Y]) for s in new_states))
    return ImputationResult(model, cells, draws, lag1, acc / max(prop, 1), degen)


# --------------------------------------------------------------------------
# end-to-end
# --------------------------------------------------------------------------

@dataclass
class MintsRun:
    model: Model
    tuning: ProposalTuning
    estimation: EstimationResult
    imputation: ImputationResult

    def summary(self) -> dict:
        est, imp = self.estimation, self.imputation
        out = {
            "iterations": est.iterations,
            "converged": est.converged,
            "phi": self.tuning.phi,
            "pilot_acceptance": self.tuning.pilot_acceptance,
            "estimation_acceptance": est.acceptance,
            "imputation_acceptance": imp.acceptance,
            "M": imp.M,
            "lag1_autocorrelation": imp.lag1_autocorrelation,
            "degenerate_x": imp.degenerate[0],
            "degenerate_y": imp.degenerate[1],
            "f_knots": int(self.model.splines.f.knots.size),
            "h_knots": int(self.model.splines.h.knots.size),
        }
        for k, v in est.psrf.items():
            out[f"psrf.{k}"] = v
        for k, v in self.model.cp.summary().items():
            out[f"prior.{k}"] = v
        return out


def fit_splines(d: PanelDataset, eps=0.05, config=None) -> SplinePair:
    b = d.bounds
    return estimate_f_h(complete_cases(d), y_bounds=(b.y_low_min, b.y_cap_max), eps=eps, config=config)


def impute(d: PanelDataset, config: RunConfig | None = None, seed: int = 0,
           replication: int = 0, splines: SplinePair | None = None,
           cp: ControlParams | None = None, early_window=None) -> MintsRun:
    """Fit splines and priors (unless supplied), tune, converge, then harvest.

    All randomness derives from ``(seed, replication)``: the pilot chain and
    each estimation chain draw from their own child streams.
    """
    config = (config or RunConfig()).validate()
    d.validate()
    if splines is None:
        splines = fit_splines(d)
    if cp is None:
        cp = compute_control_params(d, early_window)
    model = Model(d, splines, cp)
    tuning = tune_phi(model, RngStream(seed, (replication, 0, 0)), config.pilot_iters,
                      config.phi0, config.acceptance_target, config.jitter_sd, config.init_inflation)
    est = estimate(model, tuning, config, seed, replication)
    imp = run_imputation(est.states, model, tuning, config)
    return MintsRun(model, tuning, est, imp)
