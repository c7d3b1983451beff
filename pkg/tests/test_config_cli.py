import csv
import hashlib

import pytest

from mints import config as C
from mints.cli import main


def test_defaults_and_precedence(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("seed = 7\n[sampler]\nn_chains = 4\nm = 8\n")
    cfg = C.resolve(f, {"sampler.m": 12})
    assert cfg["seed"] == 7 and cfg["sampler.n_chains"] == 4 and cfg["sampler.m"] == 12
    assert cfg["sampler.n_thin"] == C.defaults()["sampler.n_thin"]
    rc = C.run_config(cfg)
    assert rc.n_chains == 4 and rc.M == 12


def test_unknown_keys_rejected(tmp_path):
    f = tmp_path / "b.cfg"
    f.write_text("[sampler]\nchainz = 4\n")
    with pytest.raises(C.ConfigKeyError):
        C.read_config_file(f)
    with pytest.raises(C.ConfigKeyError):
        C.resolve(None, {"nope": 1})


def test_value_parsing():
    assert C.parse_value("prior.early_window", "1970:1980") == (1970, 1980)
    assert C.parse_value("grid.exclude", "mnar:0.8") == (("MNAR", 0.8),)
    assert C.parse_value("sampler.pool_all", "yes") is True
    assert C.parse_value("amputation.noise_sd_x", "") is None
    with pytest.raises(ValueError):
        C.parse_value("sampler.n_chains", "four")
    with pytest.raises(ValueError):
        C.parse_value("prior.early_window", "1970")


def test_dump_round_trip(tmp_path):
    cfg = C.resolve(None, {"prior.early_window": (1990, 2000), "grid.exclude": (("MNAR", 0.8),),
                           "amputation.noise_sd_y": 3.0})
    f = tmp_path / "c.cfg"
    f.write_text(C.dump(cfg))
    assert C.resolve(f) == cfg


def test_grid_builder():
    g = C.experiment_grid(C.resolve(None, {"grid.exclude": (("MNAR", 0.8),), "grid.n_rep": 3}))
    assert len(g.experiments()) == 8 and g.n_rep == 3


def _sha(p):
    return hashlib.sha256(p.read_bytes()).hexdigest()


def _data_rows(p):
    return list(csv.DictReader(line for line in p.read_text().splitlines() if not line.startswith("#")))


def test_simulate_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["simulate", "--seed", "7", "--countries", "4", "--years", "6", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# mints ")
    assert (tmp_path / "a.csv.cfg").exists()


def test_inconsistent_m_fails_before_loading(tmp_path, capsys):
    code = main(["impute", "--data", str(tmp_path / "missing.csv"), "--chains", "3", "--m", "10",
                 "--out", str(tmp_path / "o.csv")])
    assert code == 2
    assert "M" in capsys.readouterr().err


def test_bad_flag_and_bad_key(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--bogus"])
    assert e.value.code == 2
    assert main(["simulate", "--out", str(tmp_path / "x.csv"), "--set", "sampler.nope=1"]) == 2


def test_missing_input_is_runtime_error(tmp_path):
    assert main(["fit-spline", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "s.csv")]) == 1


def test_pool_and_fit_subcommands(tmp_path):
    inp = tmp_path / "est.csv"
    inp.write_text("imputation_id,estimate,variance\n1,1,0.5\n2,2,0.5\n3,3,0.5\n")
    out = tmp_path / "pooled.csv"
    assert main(["pool", "--input", str(inp), "--out", str(out)]) == 0
    row = _data_rows(out)[0]
    assert float(row["fmi"]) == pytest.approx(0.8077, abs=1e-3)

    fit_in = tmp_path / "fit.csv"
    fit_in.write_text("group,y,x\n" + "".join(f"g,{y},{x}\n" for x, y in
                                             zip([1, 2, 3, 4, 5], [2.1, 3.9, 6.2, 7.8, 10.1])))
    fit_out = tmp_path / "fit_out.csv"
    assert main(["fit", "--input", str(fit_in), "--out", str(fit_out)]) == 0
    assert float(_data_rows(fit_out)[0]["slope"]) == pytest.approx(1.99)


def test_full_pipeline(tmp_path):
    p = lambda name: str(tmp_path / name)  # noqa: E731
    common = ["--seed", "3", "--bounds-cap", "60"]
    assert main(["simulate", *common, "--countries", "5", "--years", "12",
                 "--out", p("d.csv"), "--z-out", p("z.csv")]) == 0
    before = _sha(tmp_path / "d.csv")
    assert main(["ampute", *common, "--data", p("d.csv"), "--mechanism", "mar", "--rate", "0.2",
                 "--out", p("tr.csv")]) == 0
    assert _sha(tmp_path / "d.csv") == before
    assert (tmp_path / "tr_manifest.csv").exists()
    assert main(["fit-spline", *common, "--data", p("tr.csv"), "--out", p("s.csv")]) == 0
    imp = ["impute", *common, "--data", p("tr.csv"), "--splines", p("s.csv"), "--chains", "2",
           "--m", "4", "--thin", "10", "--block-iters", "300", "--max-iters", "600",
           "--pilot-iters", "500", "--quantiles", p("q.csv")]
    assert main([*imp, "--out", p("c.csv")]) == 0
    assert main([*imp, "--out", p("c2.csv")]) == 0
    assert _sha(tmp_path / "c.csv") == _sha(tmp_path / "c2.csv")
    summary = dict(line.split("=", 1) for line in (tmp_path / "c_summary.txt").read_text().splitlines()
                   if not line.startswith("#"))
    assert summary["bound_violations"] == "0" and summary["M"] == "4"
    assert main(["fit", *common, "--completed", p("c.csv"), "--data", p("tr.csv"), "--z", p("z.csv"),
                 "--out", p("e.csv")]) == 0
    assert len(_data_rows(tmp_path / "e.csv")) == 4
    assert main(["pool", *common, "--input", p("e.csv"), "--out", p("pooled.csv")]) == 0
    row = _data_rows(tmp_path / "pooled.csv")[0]
    assert float(row["ci_low"]) < float(row["q_bar"]) < float(row["ci_high"])
    assert main(["report", *common, "--completed", p("c.csv"), "--data", p("tr.csv"), "--out", p("r.csv")]) == 0
    rows = _data_rows(tmp_path / "r.csv")
    assert rows and all(float(r["q025"]) <= float(r["q50"]) <= float(r["q975"]) for r in rows)
