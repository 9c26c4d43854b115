import csv
import io
import re

import pytest

from dynperc.cli import (
    CSV_COLUMNS,
    EXIT_CENSORED,
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    ResultRecord,
    RunConfig,
    main,
)
from dynperc.model import ModelParams


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _records(text):
    return [ResultRecord.from_json(line) for line in text.splitlines()]


def test_simulate_blocks_schema(capsys):
    code, out, _ = _run(capsys, "simulate", "--blocks", "2000", "--lambda", "0.5", "--seed", "3")
    assert code == EXIT_OK
    (rec,) = _records(out)
    assert rec.cmd == "simulate" and rec.seed == 3 and rec.status == "ok"
    assert rec.params == {"d": 2, "p": 0.5, "mu": 1.0, "lambda": 0.5}
    names = [e["name"] for e in rec.estimates]
    assert names == ["speed", "sigma2", "derivative", "mean_tau"]
    for e in rec.estimates:
        assert set(e) == {"name", "value", "stderr", "n", "method"}
    assert rec.config["blocks"] == 2000 and rec.wall_time >= 0 and rec.timestamp


def test_simulate_adds_tail_fits_for_large_runs(capsys):
    _, out, _ = _run(capsys, "simulate", "--blocks", "10000")
    names = [e["name"] for e in _records(out)[0].estimates]
    assert "tail_slope_tau" in names and "tail_slope_U_a" in names


def test_record_round_trip():
    rec = ResultRecord("simulate", {"d": 1}, [{"name": "v", "value": 0.1, "stderr": 0.01, "n": 5, "method": "direct"}], 7)
    assert ResultRecord.from_json(rec.to_json()) == rec
    bad = ResultRecord("simulate", {}, [{"name": "v", "value": float("nan"), "stderr": 0.0, "n": 5, "method": "direct"}], 7)
    with pytest.raises(ValueError):
        bad.check_finite()


def test_deterministic_output(capsys):
    argv = ("simulate", "--blocks", "3000", "--lambda", "1", "--seed", "9")
    a = _records(_run(capsys, *argv)[1])[0]
    b = _records(_run(capsys, *argv, "--replicas", "2")[1])[0]
    assert a.estimates == b.estimates


def test_horizon_mode(capsys):
    _, out, _ = _run(capsys, "simulate", "--horizon", "5", "--lambda", "0.5", "--trajectories", "2000")
    names = [e["name"] for e in _records(out)[0].estimates]
    assert names == ["displacement", "martingale"]
    _, out, _ = _run(capsys, "simulate", "--horizon", "5", "--trajectories", "2000")
    assert [e["name"] for e in _records(out)[0].estimates] == ["displacement", "orthogonality"]


@pytest.mark.parametrize("argv", [
    ("simulate",),
    ("simulate", "--blocks", "100", "--horizon", "1"),
    ("simulate", "--blocks", "100", "--p", "1.5"),
    ("simulate", "--blocks", "100", "--mu", "-1"),
    ("simulate", "--blocks", "1"),
    ("simulate", "--horizon", "-1"),
    ("sweep", "--lambda-grid", "1,0.5"),
    ("couple-derivative", "--blocks", "100", "--eps", "0.5"),
    ("couple-monotone-1d", "--blocks", "100", "--lambda", "0.5", "--lambda2", "1"),
])
def test_config_errors_exit_2(capsys, argv):
    code, out, err = _run(capsys, *argv)
    assert code == EXIT_CONFIG and out == "" and "invalid configuration" in err


def test_censoring_exit_3(capsys, monkeypatch):
    import dynperc.batch as batch

    orig = batch.simulate_blocks

    def capped(params, n, seed, replicas=None, max_events=50):
        return orig(params, n, seed, replicas, max_events=50)

    monkeypatch.setattr("dynperc.cli.simulate_blocks", capped)
    code, out, err = _run(capsys, "simulate", "--blocks", "20", "--mu", "0.05")
    assert code == EXIT_CENSORED and out == "" and "aborted" in err


def test_config_validation_direct():
    with pytest.raises(ConfigError):
        RunConfig(ModelParams(2, 0.5, 1.0), seed=-1, blocks=10).validate()
    with pytest.raises(ConfigError):
        RunConfig(ModelParams(2, 0.5, 1.0), blocks=10, fmt="xml").validate()
    cfg = RunConfig(ModelParams(2, 0.5, 1.0), blocks=10).validate()
    assert cfg.echo()["params"]["lambda"] == 0.0


def test_sweep_cells_and_csv_companion(tmp_path, capsys):
    out = tmp_path / "sweep.jsonl"
    code = main(["sweep", "--blocks", "500", "--lambda-grid", "0,0.5,1", "--p-grid", "0.3,0.7", "--out", str(out)])
    assert code == EXIT_OK
    recs = _records(out.read_text())
    assert len(recs) == 6
    assert {(r.params["p"], r.params["lambda"]) for r in recs} == {
        (p, l) for p in (0.3, 0.7) for l in (0.0, 0.5, 1.0)
    }
    rows = list(csv.DictReader(io.StringIO(out.with_suffix(".csv").read_text())))
    assert list(rows[0])[: len(CSV_COLUMNS)] == CSV_COLUMNS
    for rec, row in zip(recs, rows):
        e = rec.estimates[0]
        assert float(row["v"]) == e["value"] and float(row["stderr"]) == e["stderr"]
        assert int(row["n"]) == e["n"] and float(row["lambda"]) == rec.params["lambda"]


def test_sweep_records_bad_cells_and_continues(capsys):
    code, out, _ = _run(capsys, "sweep", "--blocks", "200", "--p-grid", "0.5,1.5,0.6")
    assert code == EXIT_OK
    recs = _records(out)
    assert [r.status.startswith("error") for r in recs] == [False, True, False]
    assert recs[1].estimates == []


def test_sweep_large_bias(capsys):
    _, out, _ = _run(capsys, "sweep", "--blocks", "2000", "--lambda", "4", "--method", "large-bias")
    rec = _records(out)[0]
    speed, excess = rec.estimates
    assert excess["name"] == "excess"
    assert speed["value"] - excess["value"] == pytest.approx(1 / 3)


def test_csv_format(capsys):
    _, out, _ = _run(capsys, "simulate", "--blocks", "500", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["name"] for r in rows] == ["speed", "sigma2", "derivative", "mean_tau"]


def test_curve_and_coupling_commands(capsys):
    _, out, _ = _run(capsys, "curve", "--blocks", "2000", "--lambda-grid", "0,0.5")
    names = [e["name"] for e in _records(out)[0].estimates]
    assert names == ["sigma2", "speed@0", "derivative@0", "speed@0.5", "derivative@0.5"]
    code, out, _ = _run(capsys, "couple-derivative", "--blocks", "2000", "--lambda", "1")
    assert code == EXIT_OK and _records(out)[0].estimates[0]["method"] == "coupled-fd"
    code, out, _ = _run(capsys, "couple-monotone-1d", "--d", "1", "--blocks", "2000",
                        "--lambda", "0.5", "--lambda2", "1")
    rec = _records(out)[0]
    assert code == EXIT_OK and rec.params["lambda2"] == 1.0
    assert [e["name"] for e in rec.estimates][:3] == ["gap", "split_fraction", "split_bound"]


def test_verify_small_scale(tmp_path):
    out = tmp_path / "verify.txt"
    code = main(["verify", "--suite", "regen", "--scale", "0.05", "--out", str(out)])
    text = out.read_text()
    assert re.search(r"criterion +1:", text) and re.search(r"criterion +2:", text)
    assert code in (0, 1)


def test_verify_budget_marks_inconclusive(tmp_path):
    out = tmp_path / "verify.txt"
    code = main(["verify", "--suite", "1", "--scale", "0.05", "--budget", "0", "--out", str(out)])
    assert code == EXIT_OK and "INCONCLUSIVE" in out.read_text()
