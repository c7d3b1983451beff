"""Country-by-year panels of an auxiliary variable X and a variable of interest Y."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from mints._io import atomic_writer, read_data_lines

__all__ = [
    "BoundsSpec",
    "PanelDataset",
    "PanelError",
    "CsvParseError",
    "load_csv",
    "write_csv",
    "write_completed_csv",
    "complete_cases",
]

DEFAULT_SCHEMA = {"country": "country", "year": "year", "x": "x", "y": "y"}


class PanelError(ValueError):
    """Dataset violates a modelling assumption (e.g. a country without any X)."""


class CsvParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class BoundsSpec:
    """Truncation limits for the X and Y models.

    ``x_low``/``x_up``/``y_low``/``y_cap`` may be scalars or C x T arrays.
    When ``y_up_tracks_x`` is set the per-cell upper bound for Y is
    ``min(X[c, t], y_cap)``, evaluated at the current (possibly imputed) X.
    Start-year values are bounded by ``[x0_low, min observed X of c]`` and
    ``[y0_low, min observed Y of c]``.
    """

    x_low: float | np.ndarray = 0.0
    x_up: float | np.ndarray = np.inf
    y_low: float | np.ndarray = 0.0
    y_cap: float | np.ndarray = 100.0
    y_up_tracks_x: bool = True
    x0_low: float = 0.0
    y0_low: float = 0.0

    def grids(self, shape):
        """Return ``(x_low, x_up, y_low, y_cap)`` broadcast to ``shape``."""
        out = []
        for v in (self.x_low, self.x_up, self.y_low, self.y_cap):
            out.append(np.broadcast_to(np.asarray(v, dtype=float), shape).copy())
        if np.any(out[0] >= out[1]) or np.any(out[2] >= out[3]):
            raise ValueError("every cell needs low < up")
        return tuple(out)

    def y_upper(self, x, y_cap=None):
        cap = np.broadcast_to(np.asarray(self.y_cap if y_cap is None else y_cap, float), np.shape(x))
        return np.minimum(x, cap) if self.y_up_tracks_x else np.array(cap, dtype=float)

    @property
    def y_cap_max(self) -> float:
        return float(np.max(self.y_cap))

    @property
    def y_low_min(self) -> float:
        return float(np.min(self.y_low))


@dataclass(frozen=True)
class PanelDataset:
    """X and Y on a C x T grid of countries by consecutive years.

    Missing cells hold NaN and a False mask entry; the mask is authoritative.
    Years are kept as calendar years for I/O, the model works with offsets
    ``t = 1..T`` (see :attr:`year_offsets`).
    """

    country_ids: tuple
    years: np.ndarray
    x_values: np.ndarray
    y_values: np.ndarray
    bounds: BoundsSpec = field(default_factory=BoundsSpec)

    def __post_init__(self):
        x = np.array(self.x_values, dtype=float)
        y = np.array(self.y_values, dtype=float)
        if x.shape != y.shape or x.shape != (len(self.country_ids), len(self.years)):
            raise ValueError("grid shape must be (len(country_ids), len(years))")
        x.setflags(write=False)
        y.setflags(write=False)
        yrs = np.asarray(self.years, dtype=int)
        if yrs.size > 1 and np.any(np.diff(yrs) != 1):
            raise ValueError("years must be consecutive")
        object.__setattr__(self, "x_values", x)
        object.__setattr__(self, "y_values", y)
        object.__setattr__(self, "years", yrs)
        object.__setattr__(self, "country_ids", tuple(self.country_ids))

    @property
    def x_mask(self) -> np.ndarray:
        return ~np.isnan(self.x_values)

    @property
    def y_mask(self) -> np.ndarray:
        return ~np.isnan(self.y_values)

    @property
    def shape(self):
        return self.x_values.shape

    @property
    def n_countries(self) -> int:
        return len(self.country_ids)

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def year_offsets(self) -> np.ndarray:
        return np.arange(1, self.n_years + 1)

    def missing_fraction(self, variable: str) -> float:
        mask = self.x_mask if variable == "x" else self.y_mask
        return float(1.0 - mask.mean())

    def with_values(self, x_values=None, y_values=None) -> "PanelDataset":
        return PanelDataset(
            self.country_ids,
            self.years,
            self.x_values if x_values is None else x_values,
            self.y_values if y_values is None else y_values,
            self.bounds,
        )

    def with_bounds(self, bounds: BoundsSpec) -> "PanelDataset":
        return PanelDataset(self.country_ids, self.years, self.x_values, self.y_values, bounds)

    def countries_without_x(self) -> list:
        has = self.x_mask.any(axis=1)
        return [c for c, ok in zip(self.country_ids, has) if not ok]

    def validate(self):
        """Check the modelling assumptions; raise :class:`PanelError` on failure."""
        missing = self.countries_without_x()
        if missing:
            raise PanelError("countries with no observed X: " + ", ".join(missing))
        x_low, x_up, y_low, y_cap = self.bounds.grids(self.shape)
        xm, ym = self.x_mask, self.y_mask
        bad_x = xm & ((self.x_values < x_low) | (self.x_values > x_up))
        y_up = np.where(xm & self.bounds.y_up_tracks_x, np.minimum(self.x_values, y_cap), y_cap)
        bad_y = ym & ((self.y_values < y_low) | (self.y_values > y_up))
        if bad_x.any() or bad_y.any():
            cells = [(self.country_ids[c], int(self.years[t]))
                     for c, t in zip(*np.nonzero(bad_x | bad_y))]
            raise PanelError(f"observed values outside their bounds at {cells[:10]}")
        return self

    def start_bounds(self):
        """Per-country ``(x0_low, x0_up, y0_low, y0_up)`` for the year-0 values."""
        x0_up = np.where(self.x_mask.any(axis=1),
                         np.nanmin(np.where(self.x_mask, self.x_values, np.inf), axis=1),
                         np.max(np.broadcast_to(self.bounds.x_up, self.shape), axis=1))
        cap = np.max(np.broadcast_to(np.asarray(self.bounds.y_cap, float), self.shape), axis=1)
        y0_up = np.where(self.y_mask.any(axis=1),
                         np.nanmin(np.where(self.y_mask, self.y_values, np.inf), axis=1),
                         cap)
        c = self.n_countries
        return (np.full(c, float(self.bounds.x0_low)), x0_up.astype(float),
                np.full(c, float(self.bounds.y0_low)), y0_up.astype(float))


def complete_cases(d: PanelDataset):
    """Cells with both X and Y observed, row-major by (country, year).

    Returns an ``(n, 2)`` array of ``(x, y)`` pairs.
    """
    both = d.x_mask & d.y_mask
    return np.column_stack([d.x_values[both], d.y_values[both]])


def _parse_float(text, line, column):
    text = text.strip()
    if text == "" or text.upper() in ("NA", "NAN"):
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise CsvParseError(f"column {column!r}: cannot parse {text!r} as a number", line) from None


def load_csv(path, schema=None, bounds: BoundsSpec | None = None, validate=True) -> PanelDataset:
    """Read a long-format ``country,year,x,y`` file into a :class:`PanelDataset`.

    ``schema`` maps the logical names ``country/year/x/y`` to header names.
    Lines starting with ``#`` are skipped. Empty fields are missing values.
    The year grid is the full range between the earliest and latest year;
    gaps are treated as missing. Countries are ordered alphabetically.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    lines = read_data_lines(path)
    reader = csv.reader((text for _, text in lines))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("empty file") from None
    header = [h.strip() for h in header]
    idx = {}
    for key, col in schema.items():
        if col not in header:
            raise CsvParseError(f"missing column {col!r}", lines[0][0])
        idx[key] = header.index(col)

    records = {}
    for (lineno, _), row in zip(lines[1:], reader):
        if not row or all(not v.strip() for v in row):
            continue
        if len(row) != len(header):
            raise CsvParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        country = row[idx["country"]].strip()
        if not country:
            raise CsvParseError("empty country", lineno)
        try:
            year = int(float(row[idx["year"]]))
        except ValueError:
            raise CsvParseError(f"bad year {row[idx['year']]!r}", lineno) from None
        if (country, year) in records:
            raise CsvParseError(f"duplicate entry for ({country}, {year})", lineno)
        records[(country, year)] = (_parse_float(row[idx["x"]], lineno, "x"),
                                    _parse_float(row[idx["y"]], lineno, "y"))
    if not records:
        raise CsvParseError("no data rows")

    countries = sorted({c for c, _ in records})
    all_years = [y for _, y in records]
    years = np.arange(min(all_years), max(all_years) + 1)
    x = np.full((len(countries), len(years)), np.nan)
    y = np.full_like(x, np.nan)
    row_of = {c: i for i, c in enumerate(countries)}
    for (c, yr), (xv, yv) in records.items():
        x[row_of[c], yr - years[0]] = xv
        y[row_of[c], yr - years[0]] = yv
    d = PanelDataset(tuple(countries), years, x, y, bounds or BoundsSpec())
    if validate:
        d.validate()
    return d


def _fmt(v):
    return "" if np.isnan(v) else repr(float(v))


def write_csv(d: PanelDataset, path, header_line=None):
    """Write ``country,year,x,y`` rows; missing cells become empty fields."""
    with atomic_writer(path, header_line) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "year", "x", "y"])
        for i, c in enumerate(d.country_ids):
            for j, yr in enumerate(d.years):
                w.writerow([c, int(yr), _fmt(d.x_values[i, j]), _fmt(d.y_values[i, j])])


def write_completed_csv(d: PanelDataset, completed, path, header_line=None):
    """Write imputed datasets as ``imputation_id,country,year,x,y``.

    ``completed`` is a sequence of ``(x_grid, y_grid)`` pairs; ids start at 1.
    """
    with atomic_writer(path, header_line) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["imputation_id", "country", "year", "x", "y"])
        for m, (xg, yg) in enumerate(completed, start=1):
            for i, c in enumerate(d.country_ids):
                for j, yr in enumerate(d.years):
                    w.writerow([m, c, int(yr), repr(float(xg[i, j])), repr(float(yg[i, j]))])


def read_completed_csv(path, d: PanelDataset):
    """Inverse of :func:`write_completed_csv` on the grid of ``d``."""
    lines = read_data_lines(path)
    reader = csv.DictReader(text for _, text in lines)
    row_of = {c: i for i, c in enumerate(d.country_ids)}
    grids = {}
    for rec in reader:
        m = int(rec["imputation_id"])
        if m not in grids:
            grids[m] = (np.full(d.shape, np.nan), np.full(d.shape, np.nan))
        i, j = row_of[rec["country"]], int(rec["year"]) - int(d.years[0])
        grids[m][0][i, j] = float(rec["x"])
        grids[m][1][i, j] = float(rec["y"])
    return [grids[m] for m in sorted(grids)]


def load_grid_csv(path, d: PanelDataset, column: str):
    """Read ``country,year,<column>`` onto the grid of ``d`` (NaN where absent)."""
    lines = read_data_lines(path)
    reader = csv.DictReader(text for _, text in lines)
    row_of = {c: i for i, c in enumerate(d.country_ids)}
    out = np.full(d.shape, np.nan)
    for n, rec in enumerate(reader, start=2):
        if rec["country"] not in row_of:
            continue
        j = int(float(rec["year"])) - int(d.years[0])
        if 0 <= j < d.n_years:
            out[row_of[rec["country"]], j] = _parse_float(rec[column], n, column)
    return out


def write_grid_csv(d: PanelDataset, grid, column: str, path, header_line=None):
    with atomic_writer(path, header_line) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "year", column])
        for i, c in enumerate(d.country_ids):
            for j, yr in enumerate(d.years):
                w.writerow([c, int(yr), _fmt(grid[i, j])])


