"""Flat, namespaced run configuration.

Keys look like ``sampler.n_chains`` or ``spline.eps``; bare keys (``seed``,
``jobs``) sit at the top of a config file before any section. A file such as::

    seed = 7
    [sampler]
    n_chains = 4
    m = 8

is read with :mod:`configparser`; ``[sampler]`` becomes the ``sampler.``
prefix. Resolution order is defaults < file < command-line flags, and unknown
keys are rejected wherever they come from.
"""

from __future__ import annotations

import configparser
from dataclasses import fields

from mints.amputation import AmputationPlan
from mints.harness import AnalysisSpec, ExperimentGrid
from mints.panel import BoundsSpec
from mints.sampler import RunConfig
from mints.splines import AsplineConfig

_TOP = "__top__"


class ConfigKeyError(KeyError):
    pass


def _b(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(conv):
    def parse(text):
        t = str(text).strip()
        return None if t in ("", "none", "None") else conv(t)
    return parse


def _strs(text):
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


def _floats(text):
    return tuple(float(s) for s in _strs(text))


def _window(text):
    t = str(text).strip()
    if not t:
        return None
    a, sep, b = t.partition(":")
    if not sep:
        raise ValueError(f"early window must look like 1970:1980, got {text!r}")
    return int(a), int(b)


def _pairs(text):
    out = []
    for item in _strs(text):
        mech, _, rate = item.partition(":")
        out.append((mech.strip().upper(), float(rate)))
    return tuple(out)


# key -> (parser, default)
SCHEMA = {
    "seed": (int, 0),
    "jobs": (int, 1),

    "bounds.x_low": (float, 0.0),
    "bounds.x_up": (float, float("inf")),
    "bounds.y_low": (float, 0.0),
    "bounds.y_cap": (float, 100.0),
    "bounds.y_up_tracks_x": (_b, True),

    "spline.max_knots": (int, AsplineConfig.max_knots),
    "spline.bic_grid": (int, AsplineConfig.bic_grid),
    "spline.eps": (float, 0.05),

    "prior.early_window": (_window, None),

    "sampler.n_chains": (int, RunConfig.n_chains),
    "sampler.m": (int, RunConfig.M),
    "sampler.n_thin": (int, RunConfig.n_thin),
    "sampler.n_imputation_iters": (_opt(int), None),
    "sampler.block_iters": (int, RunConfig.block_iters),
    "sampler.max_iters": (int, RunConfig.max_iters),
    "sampler.psrf_threshold": (float, RunConfig.psrf_threshold),
    "sampler.pilot_iters": (int, RunConfig.pilot_iters),
    "sampler.phi0": (float, RunConfig.phi0),
    "sampler.acceptance_target": (float, RunConfig.acceptance_target),
    "sampler.jitter_sd": (float, RunConfig.jitter_sd),
    "sampler.init_inflation": (float, RunConfig.init_inflation),
    "sampler.n_monitor_cells": (int, RunConfig.n_monitor_cells),
    "sampler.pool_all": (_b, RunConfig.pool_all),
    "sampler.pool_iters": (int, RunConfig.pool_iters),

    "simulate.regime": (str, "nonlinear"),
    "simulate.c": (int, 20),
    "simulate.t": (int, 30),

    "amputation.mechanism": (str, "MCAR"),
    "amputation.rate": (float, 0.1),
    "amputation.noise_sd_x": (_opt(float), None),
    "amputation.noise_sd_y": (_opt(float), None),
    "amputation.context": (str, "simulated"),

    "grid.mechanisms": (_strs, ("MCAR", "MAR", "MNAR")),
    "grid.rates": (_floats, (0.10, 0.40, 0.80)),
    "grid.exclude": (_pairs, ()),
    "grid.n_rep": (int, 20),
    "grid.distance_weighted": (_b, False),

    "analysis.model": (str, "ols"),
    "analysis.estimand": (str, "slope"),
    "analysis.outcome_column": (str, "z"),
    "analysis.outcome_min": (_opt(float), None),
    "analysis.real_data": (_b, False),
}


def parse_value(key, text):
    if key not in SCHEMA:
        raise ConfigKeyError(f"unknown config key {key!r}")
    conv = SCHEMA[key][0]
    try:
        return conv(text)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad value for {key}: {exc}") from None


def defaults() -> dict:
    return {k: v for k, (_, v) in SCHEMA.items()}


def read_config_file(path) -> dict:
    """Parse a config file into ``{key: value}``; unknown keys raise."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str.lower
    cp.read_string(f"[{_TOP}]\n" + text, source=str(path))
    out = {}
    for section in cp.sections():
        for name, raw in cp.items(section):
            key = name if section == _TOP else f"{section.lower()}.{name}"
            out[key] = parse_value(key, raw)
    return out


def resolve(file_path=None, overrides=None) -> dict:
    """Defaults, then the file, then already-typed ``overrides`` (None values skipped)."""
    cfg = defaults()
    if file_path:
        cfg.update(read_config_file(file_path))
    for k, v in (overrides or {}).items():
        if k not in SCHEMA:
            raise ConfigKeyError(f"unknown config key {k!r}")
        if v is not None:
            cfg[k] = v
    return cfg


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ",".join(f"{a}:{b}" for a, b in v)
        return ",".join(str(x) for x in v)
    return str(v)


def dump(cfg: dict) -> str:
    """Render a resolved config in the file format (round-trips through :func:`read_config_file`)."""
    top = [k for k in cfg if "." not in k]
    lines = [f"{k} = {_fmt(cfg[k])}" for k in top]
    current = None
    for k in sorted(k for k in cfg if "." in k):
        sec, name = k.split(".", 1)
        if sec != current:
            lines.append(f"\n[{sec}]")
            current = sec
        v = cfg[k]
        if k == "prior.early_window" and v is not None:
            v = f"{v[0]}:{v[1]}"
        lines.append(f"{name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def hashable(cfg: dict) -> dict:
    return {k: _fmt(v) if k != "prior.early_window" or v is None else f"{v[0]}:{v[1]}"
            for k, v in sorted(cfg.items())}


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------

def run_config(cfg: dict) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    kw = {}
    for k, v in cfg.items():
        if k.startswith("sampler."):
            name = k.split(".", 1)[1]
            name = "M" if name == "m" else name
            if name in names:
                kw[name] = v
    kw["jobs"] = cfg["jobs"]
    return RunConfig(**kw)


def bounds(cfg: dict) -> BoundsSpec:
    return BoundsSpec(x_low=cfg["bounds.x_low"], x_up=cfg["bounds.x_up"], y_low=cfg["bounds.y_low"],
                      y_cap=cfg["bounds.y_cap"], y_up_tracks_x=cfg["bounds.y_up_tracks_x"])


def spline_config(cfg: dict) -> AsplineConfig:
    return AsplineConfig(max_knots=cfg["spline.max_knots"], bic_grid=cfg["spline.bic_grid"])


def amputation_plan(cfg: dict) -> AmputationPlan:
    return AmputationPlan(cfg["amputation.mechanism"], cfg["amputation.rate"],
                          cfg["amputation.noise_sd_x"], cfg["amputation.noise_sd_y"],
                          cfg["amputation.context"], cfg["seed"])


def analysis_spec(cfg: dict) -> AnalysisSpec:
    return AnalysisSpec(cfg["analysis.model"], cfg["analysis.estimand"],
                        cfg["analysis.outcome_min"], cfg["analysis.real_data"])


def experiment_grid(cfg: dict) -> ExperimentGrid:
    return ExperimentGrid(
        mechanisms=cfg["grid.mechanisms"], rates=cfg["grid.rates"], exclude=cfg["grid.exclude"],
        n_rep=cfg["grid.n_rep"], context=cfg["amputation.context"],
        noise_sd_x=cfg["amputation.noise_sd_x"], noise_sd_y=cfg["amputation.noise_sd_y"],
        analysis=analysis_spec(cfg), run=run_config(cfg), jobs=cfg["jobs"],
        distance_weighted=cfg["grid.distance_weighted"])
