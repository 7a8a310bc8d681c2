import json

import pytest

from fdnpiv.cli import main, read_config
from fdnpiv.simulation import synthetic_detector_records, write_detector_csv

FAST = ["--draws", "300", "--burnin", "100", "--thin", "2"]


@pytest.fixture(scope="module")
def detector_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "det.csv"
    write_detector_csv(synthetic_detector_records(8, seed=5), path)
    return path


def test_fit_outputs(detector_csv, tmp_path):
    out = tmp_path / "out"
    assert main(["fit", "--input", str(detector_csv), "--out", str(out), *FAST]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["curves.csv", "error_density.csv",
                                                      "report.json"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == 1 and rep["command"] == "fit"
    assert rep["mcmc"] == {"total": 300, "burnin": 100, "thin": 2, "retained": 100,
                           "delta": 0.05}
    assert set(rep["estimators"]) == {"bayes-npiv", "bayes-np", "pols-quadratic"}
    assert [b["bin"] for b in rep["first_stage_f"]["bins"]] == ["full", "IV <= 15", "IV > 15"]
    header = (out / "curves.csv").read_text().splitlines()[0]
    assert header == "estimator,grid,mean,pw_lo,pw_hi,sim_lo,sim_hi"


def test_config_file_and_flag_override(detector_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"input = {detector_csv}\nout = {tmp_path / 'a'}\nseed = 4\n"
                   "draws = 300\nburnin = 100\nthin = 2\nwindow = 12:00-24:00\n"
                   "bins = 10, 20\n")
    assert read_config(cfg)["seed"] == "4"
    assert main(["ftest", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert len(rep["first_stage_f"]["bins"]) == 4
    assert not (tmp_path / "a").exists()


def test_failure_names_stage_and_leaves_no_output(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    out = tmp_path / "out"
    assert main(["fit", "--input", str(bad), "--out", str(out), *FAST]) == 1
    assert "stage 'ingest' failed" in capsys.readouterr().err
    assert list(out.iterdir()) == []


def test_missing_input_and_bad_delta(tmp_path, capsys):
    assert main(["fit", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 1
    assert main(["fit", "--input", str(tmp_path / "nope.csv"), "--delta", "0.9"]) == 1
    err = capsys.readouterr().err
    assert "configuration error" in err


def test_simulate_parametric(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--n", "2000", "--estimators", "2sls-quadratic,2sls-true",
                 "--appendix-a", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert [r["estimator"] for r in rep["summary"]] == ["2sls-quadratic", "2sls-true"]
    assert len(rep["appendix_a"]["omitted_variable_bias"]) == 3
    lines = (out / "comparison.csv").read_text().splitlines()
    assert lines[0] == "estimator,grid,fitted,truth" and len(lines) == 401
    assert (out / "summary.csv").exists()


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["plot"])
