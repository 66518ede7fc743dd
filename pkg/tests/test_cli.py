import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from nmpu import toy
from nmpu.cli import main
from nmpu.datapath import NmpuConfig, check_vectors, dump_config
from nmpu.formats import write_dataset_csv


def digest(d):
    return {p.relative_to(d).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(d.rglob("*")) if p.is_file()}


def run(*args):
    return main([str(a) for a in args])


def test_explore_outputs(tmp_path):
    assert run("explore", "--n", 2000, "--out", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "report.csv").open()))
    archs = [r for r in rows if r["id"] != "FP16"]
    assert len(archs) == 15
    assert len(list((tmp_path / "hist").glob("*.csv"))) == 16
    sens = (tmp_path / "sensitivity.csv").read_text().splitlines()
    assert [l.split(",")[0] for l in sens[1:]] == ["128", "256", "512"]
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["command"] == "explore" and m["config"]["n"] == 2000


def test_explore_arch_filter_and_baseline(tmp_path):
    assert run("explore", "--n", 500, "--arch", "M5-S1,M1-S3", "--baseline", "real",
               "--out", tmp_path) == 0
    d = json.loads((tmp_path / "report.json").read_text())
    assert set(d["architectures"]) == {"M5-S1", "M1-S3"}
    assert d["meta"]["baseline"] == "real"


def test_explore_exhaustive(tmp_path):
    assert run("explore", "--arch", "M5-S1", "--exhaustive", "--out", tmp_path) == 0
    res = json.loads((tmp_path / "exhaustive.json").read_text())
    assert res["M5-S1"]["within_ci"]


@pytest.mark.parametrize("args", [
    ["explore", "--n", "0"],
    ["explore", "--gain", "-1"],
    ["explore", "--arch", "M7-S1"],
    ["adc", "--n", "1"],
    ["adc", "--cv", "0.5"],
    ["simulate", "--weights", "/nonexistent/w.nmt"],
    ["simulate", "--peripheries", "fp8"],
    ["perf", "--spec", "unknown"],
    ["perf", "--compare", "archA", "nope"],
    ["vectors", "--arch", "M1-S9"],
    ["vectors", "--shift", "5"],
])
def test_config_errors_exit_2(tmp_path, args, capsys):
    assert main(args + ["--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as e:
        main(["explore", "--n", "abc"])
    assert e.value.code == 2


def test_runtime_failure_exit_1(tmp_path, monkeypatch):
    import nmpu.cli as cli

    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli.perf, "table_row", boom)
    assert run("perf", "--out", tmp_path) == 1


def test_adc_outputs(tmp_path):
    assert run("adc", "--out", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert abs(s["cv_before"] - 0.07) < 0.01
    assert s["cv_after"] <= 0.01 and s["cv_after_quantized"] <= 0.015
    assert (tmp_path / "population.csv").read_text().startswith("level,adc0,")
    assert len(json.loads((tmp_path / "calibration.json").read_text())) == 256


def test_adc_zero_cv(tmp_path):
    assert run("adc", "--n", 2, "--cv", 0, "--out", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["cv_after"] < 1e-3


def test_simulate_outputs(tmp_path):
    assert run("simulate", "--reps", 2, "--out", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "accuracy.csv").open()))
    assert [r["periphery"] for r in rows] == ["fp32", "fp16", "nmpu:M4-S1"]
    runs = json.loads((tmp_path / "runs.json").read_text())
    assert len(runs) == 6 and set(runs[0]) == {"periphery", "seed", "accuracy"}


def test_simulate_ideal_matches_reference(tmp_path):
    assert run("simulate", "--noise", 0, "--adc", "linear", "--reps", 1,
               "--peripheries", "fp32", "--out", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["peripheries"]["fp32"]["mean"] == s["quantized_reference_accuracy"]


def test_simulate_custom_weights_and_dataset(tmp_path):
    layers, X, y = toy.load_toy_task()
    toy.save_layers(tmp_path / "w.nmt", layers)
    write_dataset_csv(tmp_path / "d.csv", X[:200], y[:200])
    out = tmp_path / "o"
    assert run("simulate", "--weights", tmp_path / "w.nmt", "--dataset", tmp_path / "d.csv",
               "--reps", 1, "--peripheries", "fp32", "--out", out) == 0
    assert json.loads((out / "runs.json").read_text())[0]["accuracy"] > 0.9


def test_perf_outputs(tmp_path, capsys):
    assert run("perf", "--compare", "archA_x64", "fp16_ref", "--out", tmp_path) == 0
    assert "speedup=139.50" in capsys.readouterr().out
    d = json.loads((tmp_path / "perf.json").read_text())
    assert d["compare"]["speedup"] == 139.5
    assert [r["total_latency_ns"] for r in d["table"]] == [256, 4, 558]
    assert (tmp_path / "table.csv").read_text().splitlines()[0].startswith("system,area_kge")


def test_vectors_sampled_and_config_file(tmp_path):
    cfg = NmpuConfig.from_raw(150, 113, 1, -7, "M2", "S3", False)
    (tmp_path / "c.txt").write_text(dump_config(cfg))
    out = tmp_path / "o"
    assert run("vectors", "--nmpu-config", tmp_path / "c.txt", "--n", 300, "--out", out) == 0
    assert check_vectors(out / "vectors.txt", cfg) == 0
    assert len((out / "vectors.txt").read_text().splitlines()) == 300


def test_manifest_round_trip(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("explore", "--n", 1500, "--seed", 9, "--gain", 200, "--out", a) == 0
    assert run("explore", "--config", a / "manifest.json", "--out", b) == 0
    assert digest(a) == digest(b)


def test_key_value_config_overrides_flags(tmp_path):
    (tmp_path / "cfg.txt").write_text("# study\nn = 700\nseed=3\nno-relu = true\n")
    out = tmp_path / "o"
    assert run("explore", "--n", 50, "--config", tmp_path / "cfg.txt", "--out", out) == 0
    m = json.loads((out / "manifest.json").read_text())["config"]
    assert (m["n"], m["seed"], m["no_relu"]) == (700, 3, True)
    (tmp_path / "bad.txt").write_text("bogus=1\n")
    assert run("explore", "--config", tmp_path / "bad.txt", "--out", out) == 2


def test_threads_env_is_deterministic(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("explore", "--n", 1000, "--out", a) == 0
    monkeypatch.setenv("NMPU_SIM_THREADS", "4")
    assert run("explore", "--n", 1000, "--out", b) == 0
    assert digest(a) == digest(b)


def test_outputs_are_utf8_lf(tmp_path):
    assert run("perf", "--out", tmp_path) == 0
    for p in tmp_path.iterdir():
        assert b"\r\n" not in p.read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "nmpu", "perf", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "archA_x64" in r.stdout
