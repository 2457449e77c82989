import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ste_lab import engine, io
from ste_lab.cli import main, parse_band_pairs, parse_pairs, root_seed
from ste_lab.errors import ConfigError, InputError
from ste_lab.signal_lab import BANDS, TimeSeries
from ste_lab.simulate import SimulationConfig


def sha(path):
    return io.sha256_file(path)


# --- simulate ---------------------------------------------------------------


def test_simulate_default_shape(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--out", str(out), "--seed", "7"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "X,Y"
    assert len(lines) == 3841
    assert all(len(l.split(",")) == 2 for l in lines[1:])
    truth = json.loads((tmp_path / "sim.truth.json").read_text())
    assert truth["n"] == 3840 and len(truth["links"]) == 8
    manifest = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["outputs"][str(out)] == sha(out)


def test_simulate_same_seed_same_hash(tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    main(["simulate", "--out", str(a), "--seed", "3", "--n-seconds", "5"])
    main(["simulate", "--out", str(b), "--seed", "3", "--n-seconds", "5"])
    main(["simulate", "--out", str(c), "--seed", "4", "--n-seconds", "5"])
    assert sha(a) == sha(b) != sha(c)


def test_simulate_seed_from_environment(tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    monkeypatch.setenv("STE_LAB_SEED", "3")
    main(["simulate", "--out", str(a), "--n-seconds", "5"])
    monkeypatch.delenv("STE_LAB_SEED")
    main(["simulate", "--out", str(b), "--seed", "3", "--n-seconds", "5"])
    assert sha(a) == sha(b)


def test_simulate_config_file(tmp_path):
    cfg = SimulationConfig(n_seconds=4).to_dict()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "s.csv"
    assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 4 * 128 + 1


def test_simulate_schema_error(tmp_path, capsys):
    cfg = SimulationConfig().to_dict()
    del cfg["snr"]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    code = main(["simulate", "--config", str(path), "--out", str(tmp_path / "s.csv")])
    assert code == 2
    assert "snr" in capsys.readouterr().err


def test_simulate_schema_pointer(tmp_path, capsys):
    cfg = SimulationConfig().to_dict()
    cfg["intervals"] = [29, "35"]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "s.csv")]) == 2
    assert "/intervals/1" in capsys.readouterr().err


def test_simulate_print_config(capsys):
    assert main(["simulate", "--print-config"]) == 0
    assert json.loads(capsys.readouterr().out) == SimulationConfig().to_dict()


# --- CSV and JSON ------------------------------------------------------------


def test_csv_round_trip_is_lossless(tmp_path):
    out = tmp_path / "sim.csv"
    main(["simulate", "--out", str(out), "--seed", "1", "--n-seconds", "3"])
    chans = io.read_signal_csv(out, 128.0)
    again = tmp_path / "again.csv"
    io.write_signal_csv(again, chans)
    assert out.read_bytes() == again.read_bytes()
    back = io.read_signal_csv(again, 128.0)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(chans, back))


def test_fmt_keeps_full_precision():
    rng = np.random.default_rng(0)
    for v in rng.standard_normal(1000) * 10.0 ** rng.integers(-10, 10, 1000):
        assert float(io.fmt(v)) == v


@pytest.mark.parametrize("body,match", [
    ("X,Y\n1,2\nnan,3\n", "data row 2"),
    ("X,Y\n1,2\n3,inf\n", "data row 2"),
    ("X,Y\n1,2\n3\n", "row 2"),
    ("X,Y\n1,abc\n", "row 1"),
    ("X,X\n1,2\n", "unique"),
    ("", "empty"),
])
def test_bad_signal_csv(tmp_path, body, match):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(InputError, match=match):
        io.read_signal_csv(path, 128.0)


def test_missing_signal_file(tmp_path):
    with pytest.raises(InputError):
        io.read_signal_csv(tmp_path / "nope.csv", 128.0)


def test_json_has_no_nan(tmp_path):
    path = tmp_path / "r.json"
    io.write_json(path, {"a": np.float64("nan"), "b": np.int64(3), "c": np.array([1.0, 2.0])})
    assert json.loads(path.read_text()) == {"a": None, "b": 3, "c": [1.0, 2.0]}


def test_rows_csv(tmp_path):
    path = tmp_path / "rows.csv"
    io.write_rows_csv(path, [{"a": 1, "b": None}, {"a": 0.1, "b": "x"}], ["a", "b"])
    rows = list(csv.DictReader(path.open()))
    assert rows == [{"a": "1", "b": ""}, {"a": "0.10000000000000001", "b": "x"}]


# --- argument parsing -------------------------------------------------------


def test_parse_band_pairs():
    assert parse_band_pairs("theta:gamma", BANDS) == [("theta", "gamma")]
    assert parse_band_pairs("alpha", BANDS) == [("alpha", "alpha")]
    assert len(parse_band_pairs("all", BANDS)) == 25
    with pytest.raises(ConfigError):
        parse_band_pairs("theta:kappa", BANDS)


def test_parse_pairs():
    labels = ["Fz", "Cz", "Pz"]
    assert parse_pairs("all", labels) is None
    assert parse_pairs("Fz:Pz", labels) == [(0, 2)]
    assert parse_pairs("0:1,1:2", labels) == [(0, 1), (1, 2)]
    with pytest.raises(ConfigError):
        parse_pairs("Fz:Oz", labels)


def test_root_seed(monkeypatch):
    monkeypatch.delenv("STE_LAB_SEED", raising=False)
    assert root_seed(None) == 0 and root_seed(5) == 5
    monkeypatch.setenv("STE_LAB_SEED", "x")
    with pytest.raises(ConfigError):
        root_seed(None)


# --- ste ---------------------------------------------------------------------


@pytest.fixture
def sim_csv(tmp_path):
    out = tmp_path / "sim.csv"
    main(["simulate", "--out", str(out), "--seed", "7"])
    return out


FAST_STE = ["--m", "32", "-k", "1", "-l", "1", "-R", "20", "--n-mc", "2000", "--segment-seconds", "none"]


def test_ste_two_results(sim_csv, tmp_path):
    out = tmp_path / "r.json"
    assert main(["ste", str(sim_csv), "--fs", "128", "--bands", "theta:gamma", *FAST_STE, "--seed", "1",
                 "--out", str(out), "--csv", str(tmp_path / "r.csv")]) == 0
    res = json.loads(out.read_text())
    assert len(res["results"]) == 2
    assert [r["direction"] for r in res["results"]] == ["X->Y", "Y->X"]
    for r in res["results"]:
        assert set(r) >= {"pair", "band_pair", "direction", "estimate", "p_raw", "p_adjusted", "exact_zero",
                          "config", "seed"}
        assert r["p_adjusted"] >= r["p_raw"]
    assert res["input_sha256"] == sha(sim_csv)
    assert len(list(csv.DictReader((tmp_path / "r.csv").open()))) == 2


def test_ste_750_tests_on_six_channels(tmp_path, monkeypatch):
    def fake(req, names=("X", "Y")):
        return [engine.SteTestResult(names[0], names[1], req.band_x.name, req.band_y.name, "X->Y", 0.0, 1.0,
                                     cell=req.cell),
                engine.SteTestResult(names[1], names[0], req.band_y.name, req.band_x.name, "Y->X", 0.0, 1.0,
                                     cell=req.cell)]

    monkeypatch.setattr(engine, "run_request", fake)
    rng = np.random.default_rng(0)
    path = tmp_path / "six.csv"
    io.write_signal_csv(path, [TimeSeries(rng.standard_normal(256), 128.0, f"E{i}") for i in range(6)])
    out = tmp_path / "r.json"
    assert main(["ste", str(path), "--fs", "128", "--pairs", "all", "--bands", "all", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["results"]) == 750


def test_ste_missing_input(tmp_path, capsys):
    code = main(["ste", str(tmp_path / "missing.csv"), "--fs", "128", "--out", str(tmp_path / "r.json")])
    assert code == 3
    assert "missing.csv" in capsys.readouterr().err


def test_ste_nan_row_reports_index(tmp_path, capsys):
    path = tmp_path / "nan.csv"
    path.write_text("X,Y\n1,2\n3,4\nnan,1\n")
    assert main(["ste", str(path), "--fs", "128", "--out", str(tmp_path / "r.json")]) == 3
    assert "row 3" in capsys.readouterr().err


def test_ste_bad_band_is_config_error(sim_csv, tmp_path):
    assert main(["ste", str(sim_csv), "--fs", "128", "--bands", "theta:kappa",
                 "--out", str(tmp_path / "r.json")]) == 2


def test_ste_rerun_from_manifest(sim_csv, tmp_path):
    out = tmp_path / "r.json"
    main(["ste", str(sim_csv), "--fs", "128", "--bands", "theta", *FAST_STE, "--seed", "4", "--out", str(out)])
    manifest = json.loads(io.manifest_path(out).read_text())
    first = out.read_bytes()
    out.unlink()
    assert main(manifest["argv"]) == 0
    assert out.read_bytes() == first
    assert manifest["outputs"][str(out)] == sha(out)
    assert manifest["inputs"][str(sim_csv)] == sha(sim_csv)


# --- gc ----------------------------------------------------------------------


def test_gc_stdout(sim_csv, capsys):
    assert main(["gc", str(sim_csv), "--fs", "128", "--order", "3"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert [r["direction"] for r in res["results"]] == ["X->Y", "Y->X"]
    assert all(r["order"] == 3 and 0 <= r["p_value"] <= 1 for r in res["results"])


def test_gc_filtered_bands(sim_csv, tmp_path):
    out = tmp_path / "gc.json"
    assert main(["gc", str(sim_csv), "--fs", "128", "--bands", "theta,delta:beta", "--out", str(out)]) == 0
    res = json.loads(out.read_text())["results"]
    assert len(res) == 4
    assert res[3]["band_pair"] == ["beta", "delta"]


def test_gc_invalid_order(sim_csv):
    assert main(["gc", str(sim_csv), "--fs", "128", "--order", "0"]) == 2


# --- adjust ------------------------------------------------------------------


def test_adjust(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("name,p_value\na,0.01\nb,0.04\nc,0.03\nd,0.20\n")
    out = tmp_path / "adj.csv"
    assert main(["adjust", str(path), "--alpha", "0.05", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["p_adjusted"]) for r in rows] == pytest.approx([0.04, 0.16 / 3, 0.16 / 3, 0.2], abs=1e-12)
    assert [r["significant"] for r in rows] == ["1", "0", "0", "0"]


@pytest.mark.parametrize("body", ["p\n1.5\n", "q\n0.1\n", "p\nabc\n"])
def test_adjust_bad_input(tmp_path, body):
    path = tmp_path / "p.csv"
    path.write_text(body)
    assert main(["adjust", str(path)]) == 3


# --- table -------------------------------------------------------------------


def test_table_minimal(tmp_path):
    out = tmp_path / "t.csv"
    code = main(["table", "table2", "--replicates", "10", "--n-seconds", "15", "--lags", "2",
                 "--eta", "32", "--out", str(out), "--seed", "1"])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 14  # 7 band pairs x 2 directions
    theta = [r for r in rows if r["link"] == "X.theta->Y.theta"][0]
    assert theta["simulated"] == "True" and int(theta["replicates"]) == 10
    assert io.manifest_path(out).exists()


def test_table_rejects_few_replicates(tmp_path):
    assert main(["table", "table3", "--replicates", "5", "--out", str(tmp_path / "t.csv")]) == 2


# --- entry point -------------------------------------------------------------


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ste_lab.cli", "simulate", "--out", str(tmp_path / "s.csv"),
                           "--n-seconds", "1"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run([sys.executable, "-m", "ste_lab.cli", "ste", str(tmp_path / "none.csv"), "--fs", "128"],
                         capture_output=True, text=True)
    assert bad.returncode != 0 and "none.csv" in bad.stderr
