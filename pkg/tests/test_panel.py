from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mints.panel import (BoundsSpec, CsvParseError, PanelError, complete_cases, load_csv,
                         load_grid_csv, read_completed_csv, write_completed_csv, write_csv)

from conftest import make_panel

DATA = Path(__file__).parent / "data"


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_one_empty_y_cell(tmp_path):
    p = _write(tmp_path, "country,year,x,y\nA,2000,10,5\nA,2001,11,\nA,2002,12,7\n")
    d = load_csv(p)
    assert d.shape == (1, 3)
    assert (~d.y_mask).sum() == 1 and not d.y_mask[0, 1]
    assert d.x_mask.all()


def test_country_without_x_is_named(tmp_path):
    p = _write(tmp_path, "country,year,x,y\nGHA,2000,10,5\nNGA,2000,,3\nNGA,2001,,4\nGHA,2001,11,6\n")
    with pytest.raises(PanelError, match="NGA"):
        load_csv(p)


def test_parse_error_reports_line(tmp_path):
    p = _write(tmp_path, "country,year,x,y\nA,2000,10,5\nA,2001,abc,5\n")
    with pytest.raises(CsvParseError) as exc:
        load_csv(p)
    assert exc.value.line == 3


def test_duplicate_rows_rejected(tmp_path):
    p = _write(tmp_path, "country,year,x,y\nA,2000,10,5\nA,2000,11,5\n")
    with pytest.raises(CsvParseError, match="duplicate"):
        load_csv(p)


def test_year_gaps_become_missing(tmp_path):
    p = _write(tmp_path, "country,year,x,y\nA,2000,10,5\nB,2003,12,6\n")
    d = load_csv(p)
    assert d.shape == (2, 4)
    assert d.x_mask.sum() == 2


def test_values_outside_bounds_rejected(tmp_path):
    p = _write(tmp_path, "country,year,x,y\nA,2000,10,12\n")
    with pytest.raises(PanelError, match="bounds"):
        load_csv(p)  # y above x


def test_comment_lines_skipped(tmp_path):
    p = _write(tmp_path, "# provenance\ncountry,year,x,y\nA,2000,10,5\n")
    assert load_csv(p).shape == (1, 1)


def test_enrollment_shaped_fixture():
    d = load_csv(DATA / "enrollment_shaped.csv")
    assert d.shape == (202, 51)
    assert d.missing_fraction("y") == pytest.approx(0.730, abs=5e-4)
    assert d.missing_fraction("x") == pytest.approx(0.376, abs=5e-4)


def test_complete_cases_examples():
    d = make_panel(np.ones((2, 2)), np.full((2, 2), 0.5))
    assert complete_cases(d).shape == (4, 2)
    nan = np.nan
    d = make_panel([[1, nan], [nan, 2]], [[nan, 0.5], [0.5, nan]])
    assert complete_cases(d).shape == (0, 2)
    x = [[1, 2, nan], [4, nan, 6], [7, 8, 9]]
    y = [[0.1, 0.2, 0.3], [nan, 0.5, 0.6], [nan, 0.8, 0.9]]
    pairs = complete_cases(make_panel(x, y))
    # enumerated by hand, row-major
    assert pairs.tolist() == [[1, 0.1], [2, 0.2], [6, 0.6], [8, 0.8], [9, 0.9]]


def test_masks_follow_nan():
    d = make_panel([[1, np.nan]], [[np.nan, 0.5]])
    assert d.x_mask.tolist() == [[True, False]]
    assert d.y_mask.tolist() == [[False, True]]
    with pytest.raises(ValueError):
        d.x_values[0, 0] = 3.0  # grids are read-only


def test_start_bounds():
    d = make_panel([[5, 3, np.nan], [np.nan, 9, 8]], [[1, np.nan, 2], [np.nan, np.nan, np.nan]],
                   BoundsSpec(y_cap=60))
    x0l, x0u, y0l, y0u = d.start_bounds()
    assert x0u.tolist() == [3, 8]
    assert y0u.tolist() == [1, 60]
    assert x0l.tolist() == [0, 0]


def test_bounds_grids_reject_empty_windows():
    with pytest.raises(ValueError):
        BoundsSpec(x_low=5, x_up=5).grids((1, 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_csv_round_trip(tmp_path_factory, C, T, seed):
    g = np.random.default_rng(seed)
    x = g.uniform(1, 50, (C, T))
    y = x * g.uniform(0, 1, (C, T))
    x[g.random((C, T)) < 0.3] = np.nan
    x[:, 0] = g.uniform(1, 50, C)
    y[g.random((C, T)) < 0.3] = np.nan
    y[:, 0] = np.minimum(y[:, 0], x[:, 0])
    d = make_panel(x, y)
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, p, "# header")
    back = load_csv(p)
    np.testing.assert_array_equal(back.x_values, d.x_values)
    np.testing.assert_array_equal(back.y_values, d.y_values)
    assert back.country_ids == d.country_ids


def test_completed_round_trip(tmp_path):
    d = make_panel([[1, np.nan]], [[np.nan, 0.5]])
    grids = [(np.array([[1.0, 2.0]]), np.array([[0.3, 0.5]])),
             (np.array([[1.0, 2.5]]), np.array([[0.2, 0.5]]))]
    write_completed_csv(d, grids, tmp_path / "c.csv")
    back = read_completed_csv(tmp_path / "c.csv", d)
    for (bx, by), (gx, gy) in zip(back, grids):
        np.testing.assert_array_equal(bx, gx)
        np.testing.assert_array_equal(by, gy)


def test_grid_csv(tmp_path):
    d = make_panel([[1, 2]], [[0.5, 0.5]])
    (tmp_path / "z.csv").write_text("country,year,z\nc0,2001,4.5\nzz,2000,1\n")
    z = load_grid_csv(tmp_path / "z.csv", d, "z")
    assert np.isnan(z[0, 0]) and z[0, 1] == 4.5
