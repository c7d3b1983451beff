"""Command-line entry point: ``mints <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` and repeated ``--set key=value``;
dedicated flags override both. Each output file starts with a provenance
comment line, and a resolved-config snapshot is written next to the primary
output as ``<output>.cfg``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from mints import __version__
from mints import config as cfgmod
from mints._io import atomic_writer, provenance_line, read_data_lines
from mints.amputation import ampute
from mints.analysis import AnalysisError, fit_ols, fit_random_intercept
from mints.distributions import RngStream
from mints.harness import (ExperimentAborted, fit_estimand, run_analysis_validation,
                           run_oos_validation)
from mints.panel import (CsvParseError, PanelError, load_csv, load_grid_csv, read_completed_csv,
                         write_completed_csv, write_csv, write_grid_csv)
from mints.pooling import PoolingError, pool
from mints.priors import PriorConstructionError
from mints.sampler import ConfigError, fit_splines, impute
from mints.simgen import SimConfig, gen_outcome_Z, gen_panel
from mints.splines import SplineFitError, read_splines_csv, write_splines_csv

log = logging.getLogger("mints")

# errors reported as "mints: error: ..." with exit status 1
_RUNTIME_ERRORS = (PanelError, CsvParseError, PriorConstructionError, SplineFitError,
                   AnalysisError, PoolingError, ExperimentAborted, OSError)
# configuration problems: exit status 2, like argparse usage errors
_CONFIG_ERRORS = (ConfigError, cfgmod.ConfigKeyError, ValueError)


class _Context:
    """Resolved config plus helpers for headers and snapshots."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.header = provenance_line(cfg["seed"], cfgmod.hashable(cfg))

    def snapshot(self, out_path):
        p = Path(out_path)
        with atomic_writer(p.with_name(p.name + ".cfg"), self.header) as fh:
            fh.write(cfgmod.dump(self.cfg))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path, rows, header, fieldnames=None):
    with atomic_writer(path, header) as fh:
        fieldnames = fieldnames or (list(rows[0]) if rows else None)
        if not fieldnames:
            return
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _write_kv(path, items, header):
    with atomic_writer(path, header) as fh:
        for k, v in items.items():
            fh.write(f"{k}={_fmt(v)}\n")


def _load(ctx, path):
    return load_csv(path, bounds=cfgmod.bounds(ctx.cfg))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_simulate(ctx, args):
    c = ctx.cfg
    sim = SimConfig(c["simulate.regime"], c["simulate.c"], c["simulate.t"], c["seed"])
    d = gen_panel(sim, RngStream(c["seed"], (0,)).generator)
    write_csv(d, args.out, ctx.header)
    if args.z_out:
        z = gen_outcome_Z(d.y_values, RngStream(c["seed"], (1,)).generator)
        write_grid_csv(d, z, "z", args.z_out, ctx.header)
    ctx.snapshot(args.out)


def cmd_ampute(ctx, args):
    d = _load(ctx, args.data)
    split = ampute(d, cfgmod.amputation_plan(ctx.cfg))
    write_csv(split.training, args.out, ctx.header)
    manifest = args.manifest or str(Path(args.out).with_suffix("")) + "_manifest.csv"
    rows = [dict(variable=v, country=c, year=y, true_value=t) for v, c, y, t in split.manifest()]
    with atomic_writer(manifest, ctx.header) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "country", "year", "true_value"])
        for r in rows:
            w.writerow([r["variable"], r["country"], r["year"], repr(r["true_value"])])
    ctx.snapshot(args.out)


def cmd_fit_spline(ctx, args):
    d = _load(ctx, args.data)
    pair = fit_splines(d, ctx.cfg["spline.eps"], cfgmod.spline_config(ctx.cfg))
    write_splines_csv(pair, args.out, ctx.header)
    ctx.snapshot(args.out)


def cmd_impute(ctx, args):
    run = cfgmod.run_config(ctx.cfg).validate()   # before touching data or sampling
    d = _load(ctx, args.data)
    splines = read_splines_csv(args.splines) if args.splines else \
        fit_splines(d, ctx.cfg["spline.eps"], cfgmod.spline_config(ctx.cfg))
    result = impute(d, run, seed=ctx.cfg["seed"], splines=splines,
                    early_window=ctx.cfg["prior.early_window"])
    imp = result.imputation
    if not run.pool_all:
        write_completed_csv(d, imp.completed_datasets(), args.out, ctx.header)
    else:
        log.info("pool_all mode: completed datasets not written; use --quantiles")
    summary = {"version": __version__, "seed": ctx.cfg["seed"],
               "missing_x": d.missing_fraction("x"), "missing_y": d.missing_fraction("y"),
               **result.summary(), "bound_violations": 0 if run.pool_all else imp.bound_violations()}
    _write_kv(args.summary or str(Path(args.out).with_suffix("")) + "_summary.txt", summary, ctx.header)
    if args.quantiles:
        C, T = d.shape
        q = imp.cell_quantiles((0.025, 0.5, 0.975))
        rows = []
        for j, cell in enumerate(imp.cells):
            var, r = divmod(int(cell), C * T)
            if var != 1:
                continue
            c, t = divmod(r, T)
            rows.append(dict(country=d.country_ids[c], year=int(d.years[t]),
                             q025=q[0, j], q50=q[1, j], q975=q[2, j]))
        _write_rows(args.quantiles, rows, ctx.header, ["country", "year", "q025", "q50", "q975"])
    ctx.snapshot(args.out)


def _read_table(path, required):
    lines = read_data_lines(path)
    reader = csv.DictReader(text for _, text in lines)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise CsvParseError(f"{path}: missing columns {missing}")
    return list(reader)


def cmd_pool(ctx, args):
    rows = _read_table(args.input, ("imputation_id", "estimate", "variance"))
    q = [float(r["estimate"]) for r in rows]
    u = [float(r["variance"]) for r in rows]
    p = pool(q, u, args.level)
    _write_rows(args.out, [p.as_row()], ctx.header)
    ctx.snapshot(args.out)


def cmd_fit(ctx, args):
    spec = cfgmod.analysis_spec(ctx.cfg)
    if args.input:
        rows = _read_table(args.input, ("group", "y", "x"))
        y = np.array([float(r["y"]) for r in rows])
        x = np.array([float(r["x"]) for r in rows])
        g = np.array([r["group"] for r in rows])
        fit = fit_ols(y, x) if spec.model == "ols" else fit_random_intercept(y, x, g)
        out = {"n": fit.n, "intercept": fit.coef["intercept"], "slope": fit.coef["slope"],
               "se_intercept": fit.se["intercept"], "se_slope": fit.se["slope"],
               "var_residual": fit.var_residual}
        if fit.var_random_intercept is not None:
            out.update(var_random_intercept=fit.var_random_intercept, theta=fit.theta,
                       boundary=fit.boundary)
        _write_rows(args.out, [out], ctx.header)
    else:
        if not (args.completed and args.data and args.z):
            raise ValueError("fit needs --input, or --completed with --data and --z")
        d = _load(ctx, args.data)
        z = load_grid_csv(args.z, d, ctx.cfg["analysis.outcome_column"])
        groups = np.broadcast_to(np.arange(d.n_countries)[:, None], d.shape)
        rows_mask = np.isfinite(z)
        if spec.outcome_min is not None:
            rows_mask &= z > spec.outcome_min
        rows = []
        for m, (_, yg) in enumerate(read_completed_csv(args.completed, d), start=1):
            est, var = fit_estimand(spec, yg[rows_mask], z[rows_mask], groups[rows_mask])
            rows.append(dict(imputation_id=m, estimate=est, variance=var))
        _write_rows(args.out, rows, ctx.header)
    ctx.snapshot(args.out)


def cmd_validate(ctx, args):
    grid = cfgmod.experiment_grid(ctx.cfg)
    d = _load(ctx, args.data)
    if args.exercise == "analysis":
        if not args.z:
            raise ValueError("validate --exercise analysis needs --z")
        z = load_grid_csv(args.z, d, ctx.cfg["analysis.outcome_column"])
        rows, _ = run_analysis_validation(d, z, grid, ctx.cfg["seed"])
    else:
        rows = [r for res in run_oos_validation(d, grid, ctx.cfg["seed"]) for r in res.rows()]
    _write_rows(args.out, rows, ctx.header)
    ctx.snapshot(args.out)


def cmd_report(ctx, args):
    d = _load(ctx, args.data)
    completed = read_completed_csv(args.completed, d)
    if not completed:
        raise ValueError(f"{args.completed} holds no imputations")
    rows = []
    for v, (mask, idx) in enumerate(((d.x_mask, 0), (d.y_mask, 1))):
        stack = np.stack([cg[idx] for cg in completed])
        q = np.quantile(stack, (0.025, 0.5, 0.975), axis=0)
        for c, t in zip(*np.nonzero(~mask)):
            rows.append(dict(variable="xy"[v], country=d.country_ids[c], year=int(d.years[t]),
                             q025=q[0, c, t], q50=q[1, c, t], q975=q[2, c, t], m=len(completed)))
    _write_rows(args.out, rows, ctx.header)
    ctx.snapshot(args.out)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _key_arg(p, flag, key, help_=None, **kw):
    """Add a flag that overrides config key ``key`` (parsed with the schema type)."""
    conv = cfgmod.SCHEMA[key][0]
    if conv is cfgmod._b:
        p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=help_)
    else:
        p.add_argument(flag, dest=key, type=lambda t, k=key: cfgmod.parse_value(k, t),
                       default=None, help=help_ or f"config key {key}", **kw)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="mints", description="Multiple imputation for bivariate panel time series.")
    top.add_argument("--version", action="version", version=f"mints {__version__}")
    sub = top.add_subparsers(dest="command", required=True, metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    _key_arg(common, "--seed", "seed", "master seed")
    _key_arg(common, "--jobs", "jobs", "worker processes for chains or replications")
    _key_arg(common, "--bounds-cap", "bounds.y_cap", "upper cap on Y (Y <= min(X, cap))")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic panel")
    _key_arg(p, "--regime", "simulate.regime")
    _key_arg(p, "--countries", "simulate.c")
    _key_arg(p, "--years", "simulate.t")
    p.add_argument("--out", required=True)
    p.add_argument("--z-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ampute", parents=[common], help="remove observed cells by MCAR/MAR/MNAR")
    p.add_argument("--data", required=True)
    _key_arg(p, "--mechanism", "amputation.mechanism")
    _key_arg(p, "--rate", "amputation.rate")
    _key_arg(p, "--noise-sd-x", "amputation.noise_sd_x")
    _key_arg(p, "--noise-sd-y", "amputation.noise_sd_y")
    _key_arg(p, "--context", "amputation.context")
    p.add_argument("--out", required=True, help="training CSV")
    p.add_argument("--manifest", help="test-manifest CSV (default <out>_manifest.csv)")
    p.set_defaults(func=cmd_ampute)

    p = sub.add_parser("fit-spline", parents=[common], help="fit f and h to the complete cases")
    p.add_argument("--data", required=True)
    _key_arg(p, "--eps", "spline.eps")
    _key_arg(p, "--max-knots", "spline.max_knots")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_spline)

    p = sub.add_parser("impute", parents=[common], help="run the sampler and write completed datasets")
    p.add_argument("--data", required=True)
    p.add_argument("--splines", help="reuse f/h written by fit-spline")
    _key_arg(p, "--chains", "sampler.n_chains")
    _key_arg(p, "--m", "sampler.m")
    _key_arg(p, "--thin", "sampler.n_thin")
    _key_arg(p, "--max-iters", "sampler.max_iters")
    _key_arg(p, "--block-iters", "sampler.block_iters")
    _key_arg(p, "--pilot-iters", "sampler.pilot_iters")
    _key_arg(p, "--psrf-threshold", "sampler.psrf_threshold")
    _key_arg(p, "--early-window", "prior.early_window")
    _key_arg(p, "--pool-all", "sampler.pool_all", "harvest every sweep (no completed datasets)")
    p.add_argument("--out", required=True, help="completed-datasets CSV")
    p.add_argument("--summary", help="key=value run summary (default <out>_summary.txt)")
    p.add_argument("--quantiles", help="per-cell Y quantiles CSV")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("pool", parents=[common], help="Rubin-pool per-imputation estimates")
    p.add_argument("--input", required=True, help="CSV imputation_id,estimate,variance")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("fit", parents=[common], help="fit the analysis model")
    p.add_argument("--input", help="CSV group,y,x (y is the outcome)")
    p.add_argument("--completed", help="completed-datasets CSV; one fit per imputation")
    p.add_argument("--data", help="panel CSV the completed datasets belong to")
    p.add_argument("--z", help="outcome CSV country,year,<analysis.outcome_column>")
    _key_arg(p, "--model", "analysis.model")
    _key_arg(p, "--estimand", "analysis.estimand")
    _key_arg(p, "--outcome-min", "analysis.outcome_min")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate", parents=[common], help="run a validation grid")
    p.add_argument("--exercise", choices=("analysis", "oos"), required=True)
    p.add_argument("--grid", help="config file holding the grid (alias of --config)")
    p.add_argument("--data", required=True)
    p.add_argument("--z", help="outcome CSV for the analysis exercise")
    _key_arg(p, "--reps", "grid.n_rep")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", parents=[common], help="per-cell quantiles over completed datasets")
    p.add_argument("--completed", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return top


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = cfgmod.parse_value(key.strip(), val)
    for k, v in vars(args).items():
        if k in cfgmod.SCHEMA and v is not None:
            out[k] = v
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.verbose == 0:
        warnings.simplefilter("default")
    try:
        if args.config and getattr(args, "grid", None):
            raise ValueError("give either --config or --grid, not both")
        cfg = cfgmod.resolve(args.config or getattr(args, "grid", None), _overrides(args))
        args.func(_Context(cfg), args)
    except _RUNTIME_ERRORS as exc:
        print(f"mints: error: {exc}", file=sys.stderr)
        return 1
    except _CONFIG_ERRORS as exc:
        print(f"mints: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
