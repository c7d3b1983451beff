import numpy as np
import pytest

from mints.amputation import AmputationPlan, ampute, lowest_scores, n_to_ampute
from mints.distributions import RngStream
from mints.simgen import SimConfig, gen_panel


@pytest.fixture(scope="module")
def full():
    return gen_panel(SimConfig("nonlinear", C=12, T=25), RngStream(3).generator)


@pytest.fixture(scope="module")
def holey(full):
    rng = np.random.default_rng(0)
    x = np.where(rng.random(full.shape) < 0.2, np.nan, full.x_values)
    y = np.where(rng.random(full.shape) < 0.3, np.nan, full.y_values)
    return full.with_values(x, y)


@pytest.mark.parametrize("mech", ["MCAR", "MAR", "MNAR"])
@pytest.mark.parametrize("rate", [0.1, 0.4, 0.8])
def test_counts_and_partition(holey, mech, rate):
    s = ampute(holey, AmputationPlan(mech, rate, seed=5))
    for test, started, observed in ((s.test_x, s.started_missing_x, s.observed_x),
                                    (s.test_y, s.started_missing_y, s.observed_y)):
        n = int((~started).sum())
        assert abs(test.sum() - rate * n) <= 1
        assert not np.any(test & started)
        parts = test.astype(int) + started.astype(int) + observed.astype(int)
        assert np.all(parts == 1)


def test_tiny_rate_amputes_nothing(full):
    s = ampute(full, AmputationPlan("MCAR", 1e-9, seed=1))
    assert s.test_x.sum() == 0 and s.test_y.sum() == 0


def test_mar_takes_early_years(full):
    s = ampute(full, AmputationPlan("MAR", 0.4, seed=2))
    t = np.broadcast_to(np.arange(full.shape[1]), full.shape)
    assert t[s.test_x].mean() < t[s.observed_x].mean()
    assert t[s.test_y].mean() < t[s.observed_y].mean()


@pytest.mark.parametrize("rate", [0.1, 0.4, 0.8])
def test_mnar_noiseless_takes_smallest(holey, rate):
    s = ampute(holey, AmputationPlan("MNAR", rate, noise_sd_x=1e-6, noise_sd_y=1e-6, seed=3))
    for test, vals in ((s.test_x, holey.x_values), (s.test_y, holey.y_values)):
        obs = vals[~np.isnan(vals)]
        k = n_to_ampute(rate, obs.size)
        np.testing.assert_array_equal(np.sort(vals[test]), np.sort(obs)[:k])


def test_x_and_y_use_independent_streams(full):
    corr = []
    for seed in range(200):
        s = ampute(full, AmputationPlan("MCAR", 0.4, seed=seed))
        corr.append(np.corrcoef(s.test_x.ravel(), s.test_y.ravel())[0, 1])
    corr = np.array(corr)
    # each correlation is roughly N(0, 1/n) under independence
    assert abs(corr.mean()) < 3 / np.sqrt(full.x_values.size * corr.size)


def test_same_seed_same_split(full):
    a = ampute(full, AmputationPlan("MAR", 0.4, seed=9))
    b = ampute(full, AmputationPlan("MAR", 0.4, seed=9))
    np.testing.assert_array_equal(a.test_x, b.test_x)
    assert a.manifest() == b.manifest()


def test_manifest_holds_truths(full):
    s = ampute(full, AmputationPlan("MCAR", 0.1, seed=4))
    rows = s.manifest()
    assert len(rows) == s.test_x.sum() + s.test_y.sum()
    var, cid, year, val = rows[0]
    c = full.country_ids.index(cid)
    t = int(np.flatnonzero(full.years == year)[0])
    assert val == (full.x_values if var == "x" else full.y_values)[c, t]


def test_single_variable(full):
    s = ampute(full, AmputationPlan("MCAR", 0.4, variables=("y",)))
    assert s.test_x.sum() == 0 and s.test_y.sum() > 0


def test_ties_broken_row_major():
    m = lowest_scores(np.zeros((2, 3)), np.ones((2, 3), bool), 2)
    np.testing.assert_array_equal(m, [[True, True, False], [False, False, False]])


def test_noise_defaults():
    assert AmputationPlan("MAR", 0.1).noise_sd("x") == 10
    assert AmputationPlan("MNAR", 0.1).noise_sd("y") == 40
    p = AmputationPlan("MNAR", 0.1, context="enrollment")
    assert (p.noise_sd("x"), p.noise_sd("y")) == (25, 15)
    assert AmputationPlan("MAR", 0.1, context="enrollment").noise_sd("y") == 40
    assert AmputationPlan("mar", 0.1, noise_sd_y=3).noise_sd("y") == 3


@pytest.mark.parametrize("kw", [dict(rate=0.0), dict(rate=1.0), dict(mechanism="XYZ"),
                                dict(noise_sd_x=-1.0), dict(context="mars")])
def test_plan_validation(kw):
    args = dict(mechanism="MAR", rate=0.2) | kw
    with pytest.raises(ValueError):
        AmputationPlan(**args)
