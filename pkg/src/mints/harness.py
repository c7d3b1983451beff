"""Validation experiments over a grid of missingness mechanisms and rates.

Two exercises are supported:

* analysis-model validation: ampute, impute M datasets, fit the analysis
  model on each, pool, and score the pooled estimate against the full-data
  value over replications;
* out-of-sample validation: ampute once, pool posterior-predictive draws of
  every held-out Y, and score medians and 95% bands against the truth.

A mean-imputation baseline and a spline-only predictor serve as anchors.
"""

from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from mints.amputation import AmputationPlan, SplitDataset, ampute
from mints.analysis import fit_ols, fit_random_intercept
from mints.metrics import ScoreReport, score_predictions
from mints.panel import PanelDataset
from mints.pooling import pool
from mints.sampler import RunConfig, fit_splines, impute, initial_grids, Model
from mints.priors import compute_control_params

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.10


class ExperimentAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class AnalysisSpec:
    """Which model to fit on (Y, Z) and which coefficient to score.

    ``model`` is ``"ols"`` or ``"random_intercept"``; ``estimand`` is
    ``"slope"`` or ``"var_random_intercept"`` (the latter has no pooled
    variance, so only its MAE is reported). ``outcome_min`` keeps rows with
    ``Z > outcome_min``. In ``real_data`` mode the imputed fits use only the
    simulated-as-missing cells and the truth uses the observed cells of the
    full data.
    """

    model: str = "ols"
    estimand: str = "slope"
    outcome_min: float | None = None
    real_data: bool = False

    def __post_init__(self):
        if self.model not in ("ols", "random_intercept"):
            raise ValueError(f"unknown analysis model {self.model!r}")
        if self.estimand not in ("slope", "var_random_intercept"):
            raise ValueError(f"unknown estimand {self.estimand!r}")
        if self.estimand == "var_random_intercept" and self.model != "random_intercept":
            raise ValueError("var_random_intercept needs the random_intercept model")


@dataclass(frozen=True)
class ExperimentGrid:
    mechanisms: tuple = ("MCAR", "MAR", "MNAR")
    rates: tuple = (0.10, 0.40, 0.80)
    exclude: tuple = ()                  # (mechanism, rate) pairs to skip
    n_rep: int = 20
    context: str = "simulated"
    noise_sd_x: float | None = None
    noise_sd_y: float | None = None
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    run: RunConfig = field(default_factory=RunConfig)
    jobs: int = 1
    distance_weighted: bool = False

    def experiments(self):
        out = []
        for mech in self.mechanisms:
            for rate in self.rates:
                if not 0 < rate < 1:
                    raise ValueError(f"rate {rate} outside (0, 1)")
                if (mech.upper(), float(rate)) in {(m.upper(), float(r)) for m, r in self.exclude}:
                    continue
                out.append((mech.upper(), float(rate)))
        return out


def experiment_id(mechanism, rate) -> str:
    return f"{mechanism.upper()}-{int(round(rate * 100)):02d}"


def replication_seed(master_seed, exp_id, rep) -> int:
    """Seed for one replication, derived from the master seed, experiment and index."""
    ss = np.random.SeedSequence([int(master_seed), zlib.crc32(exp_id.encode()), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# --------------------------------------------------------------------------
# analysis fits
# --------------------------------------------------------------------------

def fit_estimand(spec: AnalysisSpec, y, z, groups):
    """Return ``(estimate, variance)`` of the estimand on the rows given."""
    if spec.model == "ols":
        r = fit_ols(z, y)
        return r.slope, r.slope_var
    r = fit_random_intercept(z, y, groups)
    if spec.estimand == "slope":
        return r.slope, r.slope_var
    return r.var_random_intercept, float("nan")


def _rows(spec: AnalysisSpec, z, keep):
    rows = keep & np.isfinite(z)
    if spec.outcome_min is not None:
        rows &= z > spec.outcome_min
    return rows


def true_value(d: PanelDataset, z, spec: AnalysisSpec):
    rows = _rows(spec, z, d.y_mask)
    groups = np.broadcast_to(np.arange(d.n_countries)[:, None], d.shape)
    return fit_estimand(spec, d.y_values[rows], z[rows], groups[rows])[0]


def mean_impute(d: PanelDataset, variable="y"):
    """Country-mean fill of a variable (grand mean for countries with none observed)."""
    v = d.y_values if variable == "y" else d.x_values
    m = ~np.isnan(v)
    grand = float(np.nanmean(v)) if m.any() else 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        cm = np.where(m.any(axis=1), np.nansum(v, axis=1) / np.maximum(m.sum(axis=1), 1), grand)
    return np.where(m, v, cm[:, None])


def _interval(est, var, df, level=0.95):
    crit = stats.t.ppf(0.5 + level / 2, df) if np.isfinite(df) else stats.norm.ppf(0.5 + level / 2)
    half = crit * math.sqrt(var)
    return est - half, est + half


@dataclass
class ReplicationResult:
    rep: int
    seed: int
    estimate: float
    ci: tuple
    fmi: float
    baseline_estimate: float
    baseline_ci: tuple
    missing_x: float
    missing_y: float
    converged: bool
    acceptance: float


def analysis_replication(d: PanelDataset, z, spec: AnalysisSpec, plan: AmputationPlan,
                         run: RunConfig, rep=0) -> ReplicationResult:
    """Ampute, impute, fit on every completed dataset, and pool."""
    split = ampute(d, plan)
    _assert_no_leak(split)
    result = impute(split.training, run, seed=plan.seed)
    groups = np.broadcast_to(np.arange(d.n_countries)[:, None], d.shape)
    keep = split.test_y if spec.real_data else np.ones(d.shape, dtype=bool)
    rows = _rows(spec, z, keep)
    qs, us = [], []
    for _, yg in result.imputation.completed_datasets():
        q, u = fit_estimand(spec, yg[rows], z[rows], groups[rows])
        qs.append(q)
        us.append(u)
    if spec.estimand == "var_random_intercept":
        est, ci, fmi = float(np.mean(qs)), (math.nan, math.nan), math.nan
    else:
        p = pool(qs, us)
        est, ci, fmi = p.q_bar, p.ci, p.fmi

    yb = mean_impute(split.training)
    bq, bu = fit_estimand(spec, yb[rows], z[rows], groups[rows])
    bci = (math.nan, math.nan) if not np.isfinite(bu) else _interval(bq, bu, rows.sum() - 2)
    return ReplicationResult(rep, plan.seed, est, ci, fmi, bq, bci,
                             split.training.missing_fraction("x"),
                             split.training.missing_fraction("y"),
                             result.estimation.converged, result.estimation.acceptance)


def _assert_no_leak(split: SplitDataset):
    tr = split.training
    if not (np.all(np.isnan(tr.x_values[split.test_x])) and np.all(np.isnan(tr.y_values[split.test_y]))):
        raise AssertionError("held-out cells leaked into the training data")


def _analysis_job(args):
    d, z, spec, plan, run, rep = args
    try:
        return analysis_replication(d, z, spec, plan, run, rep)
    except Exception as exc:  # counted, not fatal, unless too many
        log.warning("replication %d failed: %s", rep, exc)
        return exc


def _map(fn, jobs, n_workers):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_analysis_validation(d: PanelDataset, z, grid: ExperimentGrid, master_seed=0):
    """Per-experiment summaries of pooled-estimate accuracy over replications.

    Returns ``(summaries, details)``: one dict per experiment and the list of
    :class:`ReplicationResult` per experiment id.
    """
    z = np.asarray(z, dtype=float)
    spec = grid.analysis
    truth = true_value(d, z, spec)
    summaries, details = [], {}
    for mech, rate in grid.experiments():
        eid = experiment_id(mech, rate)
        jobs = []
        for rep in range(grid.n_rep):
            seed = replication_seed(master_seed, eid, rep)
            plan = AmputationPlan(mech, rate, grid.noise_sd_x, grid.noise_sd_y, grid.context, seed)
            jobs.append((d, z, spec, plan, replace(grid.run, jobs=1), rep))
        out = _map(_analysis_job, jobs, grid.jobs)
        ok = [r for r in out if isinstance(r, ReplicationResult)]
        failed = len(out) - len(ok)
        if failed > MAX_FAILURE_FRACTION * len(out):
            raise ExperimentAborted(f"{eid}: {failed} of {len(out)} replications failed")
        details[eid] = ok
        summaries.append(_summarize(eid, mech, rate, truth, ok, failed))
    return summaries, details


def _summarize(eid, mech, rate, truth, reps, failed):
    est = np.array([r.estimate for r in reps])
    cov = np.array([r.ci[0] <= truth <= r.ci[1] for r in reps if np.isfinite(r.ci[0])])
    bcov = np.array([r.baseline_ci[0] <= truth <= r.baseline_ci[1] for r in reps
                     if np.isfinite(r.baseline_ci[0])])
    fmi = np.array([r.fmi for r in reps])
    nanmean = lambda a: float(np.mean(a)) if a.size and np.isfinite(a).all() else math.nan  # noqa: E731
    return {
        "experiment": eid, "mechanism": mech, "rate": rate, "n_rep": len(reps),
        "n_failed": failed, "truth": truth,
        "MAE": float(np.mean(np.abs(est - truth))) if reps else math.nan,
        "Cvg": float(cov.mean()) if cov.size else math.nan,
        "FMI": nanmean(fmi),
        "baseline_MAE": float(np.mean(np.abs([r.baseline_estimate - truth for r in reps]))) if reps else math.nan,
        "baseline_Cvg": float(bcov.mean()) if bcov.size else math.nan,
        "missing_x": float(np.mean([r.missing_x for r in reps])) if reps else math.nan,
        "missing_y": float(np.mean([r.missing_y for r in reps])) if reps else math.nan,
        "converged": int(sum(r.converged for r in reps)),
    }


# --------------------------------------------------------------------------
# out-of-sample
# --------------------------------------------------------------------------

@dataclass
class OosResult:
    experiment: str
    mints: ScoreReport
    spline_only: ScoreReport
    mean_baseline: ScoreReport
    n_draws: int
    missing_y: float

    def rows(self):
        base = {"experiment": self.experiment, "missing_y": self.missing_y, "n_draws": self.n_draws}
        return [dict(base, method=name, **rep.as_row()) for name, rep in
                (("MINTS", self.mints), ("spline", self.spline_only), ("mean", self.mean_baseline))]


def spline_only_prediction(training: PanelDataset, splines=None):
    """f(X) with a normal band of half-width 1.96 * sigma, sigma = h(X) sqrt(pi/2).

    X is taken as observed, or linearly interpolated within the country where
    it is missing. Predictions and bands are clipped to the Y bounds.
    """
    splines = splines or fit_splines(training)
    model = Model(training, splines, compute_control_params(training))
    x, _ = initial_grids(model)
    med = splines.f(x)
    sd = splines.h(x) * math.sqrt(math.pi / 2)
    lo_b = model.B[2]
    up_b = training.bounds.y_upper(x, model.B[3])
    clip = lambda v: np.clip(v, lo_b, np.maximum(up_b, lo_b))  # noqa: E731
    return clip(med), clip(med - 1.96 * sd), clip(med + 1.96 * sd)


def mean_prediction(training: PanelDataset):
    """Country mean of observed Y with a band of +-1.96 country SDs."""
    y = training.y_values
    m = ~np.isnan(y)
    med = mean_impute(training)
    overall_sd = float(np.nanstd(y, ddof=1)) if m.sum() > 1 else 0.0
    sd = np.array([np.nanstd(y[c], ddof=1) if m[c].sum() > 1 else overall_sd
                   for c in range(y.shape[0])])
    sd = np.broadcast_to(sd[:, None], y.shape)
    return med, med - 1.96 * sd, med + 1.96 * sd


def oos_experiment(d: PanelDataset, plan: AmputationPlan, run: RunConfig,
                   distance_weighted=False) -> OosResult:
    split = ampute(d, plan)
    _assert_no_leak(split)
    pooled_run = replace(run, pool_all=True)
    result = impute(split.training, pooled_run, seed=plan.seed)
    imp = result.imputation
    test = split.test_y
    C, T = d.shape
    y_cells = C * T + np.flatnonzero(test.ravel())
    col = np.searchsorted(imp.cells, y_cells)
    q = imp.cell_quantiles((0.025, 0.5, 0.975))[:, col]
    truth = d.y_values[test]
    mints = score_predictions(truth, q[1], q[0], q[2], distance_weighted)
    med, lo, up = spline_only_prediction(split.training, result.model.splines)
    spl = score_predictions(truth, med[test], lo[test], up[test], distance_weighted)
    med, lo, up = mean_prediction(split.training)
    mean = score_predictions(truth, med[test], lo[test], up[test], distance_weighted)
    return OosResult(experiment_id(plan.mechanism, plan.rate), mints, spl, mean,
                     imp.pooled_draws().shape[0], split.training.missing_fraction("y"))


def _oos_job(args):
    d, plan, run, dw = args
    try:
        return oos_experiment(d, plan, run, dw)
    except Exception as exc:
        log.warning("out-of-sample experiment %s failed: %s",
                    experiment_id(plan.mechanism, plan.rate), exc)
        return exc


def run_oos_validation(d: PanelDataset, grid: ExperimentGrid, master_seed=0):
    """One replication per experiment; returns the list of :class:`OosResult`."""
    jobs = []
    for mech, rate in grid.experiments():
        seed = replication_seed(master_seed, experiment_id(mech, rate), 0)
        plan = AmputationPlan(mech, rate, grid.noise_sd_x, grid.noise_sd_y, grid.context, seed)
        jobs.append((d, plan, replace(grid.run, jobs=1), grid.distance_weighted))
    out = _map(_oos_job, jobs, grid.jobs)
    ok = [r for r in out if isinstance(r, OosResult)]
    failed = len(out) - len(ok)
    if failed > MAX_FAILURE_FRACTION * len(out):
        raise ExperimentAborted(f"{failed} of {len(out)} out-of-sample experiments failed")
    return ok
