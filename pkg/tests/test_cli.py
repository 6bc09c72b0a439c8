import json

import numpy as np
import pytest

from tvpdma.cli import SERIES_FILES, main, parse_delta, parse_keep
from tvpdma.errors import ConfigError


@pytest.fixture
def sim(tmp_path):
    path = tmp_path / "sim.csv"
    assert main(["simulate", "--t", "80", "--n", "3", "--seed", "2", "--out", str(path)]) == 0
    return path


def fit_args(sim, out, *extra):
    return ["fit", "--data", str(sim), "--time-column", "time", "--response", "y",
            "--term", "x1", "--term", "x2", "--threads", "1", "--out", str(out), "--quiet", *extra]


def test_parse_delta():
    assert parse_delta("0.9:1:0.01") == tuple(round(0.9 + 0.01 * i, 10) for i in range(11))
    assert parse_delta("0.95,0.99") == (0.95, 0.99)
    with pytest.raises(ConfigError):
        parse_delta("0.9:1:0")
    with pytest.raises(ConfigError):
        parse_delta("a,b")


def test_parse_keep():
    names = ["(Intercept)", "x1", "x2"]
    assert parse_keep("1,x2", names) == [0, 2]
    assert parse_keep("ks", names) == "KS"
    assert parse_keep(None, names) is None
    for bad in ("0", "4", "x9"):
        with pytest.raises(ConfigError):
            parse_keep(bad, names)


def test_simulate_writes_theta(sim):
    theta = sim.with_name("sim_theta.csv").read_text().splitlines()
    assert theta[0] == "time,(Intercept),x1,x2"
    assert len(theta) == 81
    assert sim.read_text().splitlines()[0] == "time,y,x1,x2"


def test_fit_outputs(sim, tmp_path):
    out = tmp_path / "run"
    assert main(fit_args(sim, out, "--burn", "5", "--keep", "1")) == 0
    for name in SERIES_FILES:
        lines = (out / name).read_text().splitlines()
        assert len(lines) == 76, name
        assert lines[1].startswith("6,")
    assert (out / "inclusion.csv").read_text().splitlines()[0] == "time,(Intercept),x1,x2"
    assert (out / "pmt.csv").read_text().splitlines()[0] == "time,0.9,0.95,0.99"
    meta = json.loads((out / "meta.json").read_text())
    assert (meta["T"], meta["n"], meta["k"], meta["combinations_with_delta"]) == (80, 3, 4, 12)
    assert meta["keep"] == ["(Intercept)"]
    incl = np.loadtxt(out / "inclusion.csv", delimiter=",", skiprows=1)
    assert np.all(incl[:, 1] == 1.0)


def test_fit_summary_printed(sim, tmp_path, capsys):
    args = [a for a in fit_args(sim, tmp_path / "run") if a != "--quiet"]
    assert main(args) == 0
    text = capsys.readouterr().out
    for heading in ("Model combinations = 7", "Residuals:", "Coefficients:",
                    "Variance contribution", "Forecast Performance:"):
        assert heading in text


def test_dry_run_counts(sim, tmp_path, capsys):
    assert main(fit_args(sim, tmp_path / "run", "--delta", "0.9:1:0.01", "--dry-run")) == 0
    meta = json.loads((tmp_path / "run" / "meta.json").read_text())
    assert (meta["k"], meta["combinations_with_delta"]) == (7, 77)
    assert not (tmp_path / "run" / "yhat.csv").exists()


def test_backtest_run_matches_fresh_fit(sim, tmp_path):
    run = tmp_path / "run"
    assert main(fit_args(sim, run, "--burn", "5")) == 0
    assert main(["backtest", "--run", str(run), "--burn", "10"]) == 0
    direct = tmp_path / "direct"
    args = [a for a in fit_args(sim, direct, "--burn", "10") if a not in ("fit", "--quiet")]
    assert main(["backtest", *args]) == 0
    assert (run / "scores.csv").read_text() == (direct / "scores.csv").read_text()
    assert (run / "scores.csv").read_text().splitlines()[0] == "metric,DMA,DMS"


def test_backtest_burn_shorter_than_fit(sim, tmp_path):
    run = tmp_path / "run"
    main(fit_args(sim, run, "--burn", "5"))
    assert main(["backtest", "--run", str(run), "--burn", "3"]) == 2


@pytest.mark.parametrize("extra,code", [
    (["--alpha", "1.5"], 2),
    (["--keep", "x7"], 2),
    (["--max-predictors", "2"], 4),
])
def test_exit_codes(sim, tmp_path, extra, code):
    assert main(fit_args(sim, tmp_path / "run", *extra)) == code


def test_data_error_exit(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,y,x1\n1,1,2\n2,NA,3\n3,1,1\n")
    assert main(["fit", "--data", str(bad), "--time-column", "time", "--response", "y",
                 "--term", "x1", "--out", str(tmp_path / "o")]) == 3


def test_argparse_error_exit():
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--data"])
    assert exc.value.code == 2


def test_numeric_error_exit(tmp_path):
    path = tmp_path / "huge.csv"
    path.write_text("time,y\n" + "".join(f"{t},{1e200 * (-1) ** t}\n" for t in range(1, 30)))
    code = main(["fit", "--data", str(path), "--time-column", "time", "--response", "y",
                 "--threads", "1", "--out", str(tmp_path / "o"), "--quiet"])
    assert code == 5


def test_kitchen_sink_inclusion_all_ones(sim, tmp_path):
    out = tmp_path / "ks"
    assert main(fit_args(sim, out, "--keep", "KS")) == 0
    assert json.loads((out / "meta.json").read_text())["k"] == 1
    incl = np.loadtxt(out / "inclusion.csv", delimiter=",", skiprows=1)[:, 1:]
    assert np.all(incl == 1.0)


def test_simulate_rerun_identical(tmp_path):
    args = ["simulate", "--t", "500", "--n", "6", "--state-var", "0.01,0.01,0.01,0.01,0,0", "--seed", "42"]
    main(args + ["--out", str(tmp_path / "a.csv")])
    main(args + ["--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert main(["simulate", "--t", "5", "--n", "2", "--state-var", "0.1", "--out", str(tmp_path / "c.csv")]) == 2
