import json
import subprocess
import sys

import numpy as np
import pytest

from graindiagrams.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_SOLVER, main
from graindiagrams.volume_io import load_scan, read_ppm


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--k", "4", "--dims", "12", "12", "12", "--seed", "3",
                 "--out", str(out)]) == EXIT_OK
    return out


def test_synth_outputs(synth_dir):
    scan = load_scan(synth_dir / "scan.json", synth_dir / "scan.raw")
    assert scan.dims == (12, 12, 12) and scan.k == 4
    assert (scan.kappa() > 0).all()
    assert json.loads((synth_dir / "truth_diagram.json").read_text())


def test_stats(synth_dir, tmp_path):
    assert main(["stats", str(synth_dir / "scan"), "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "stats.json").read_text())
    assert doc["neighbors"] and len(doc["neighbors"][0]) == 2


@pytest.mark.parametrize("method", ["sgbpd", "dilpm"])
def test_fit_rasterize_eval(synth_dir, tmp_path, method):
    out = tmp_path / method
    assert main(["fit", str(synth_dir / "scan"), "--method", method, "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert 0.8 <= report["accuracy"] <= 1.0
    assert (out / "report.txt").exists() and (out / "predicted_z6.ppm").exists()
    assert main(["rasterize", str(out / "diagram.json"), str(synth_dir / "scan"),
                 "--out", str(out)]) == EXIT_OK
    a = load_scan(out / "predicted.json", out / "predicted.raw")
    b = load_scan(out / "rasterized.json", out / "rasterized.raw")
    assert np.array_equal(a.labels, b.labels)
    assert main(["eval", str(synth_dir / "scan"), str(out / "predicted"),
                 "--out", str(out)]) == EXIT_OK
    ev = json.loads((out / "eval_report.json").read_text())
    assert ev["accuracy"] == report["accuracy"]


def test_fit_with_config(synth_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": 1, "fit": {"support": {
        "strategy": "resolution", "resolution": {"tau": 6}, "interior_delta": 2}}}))
    assert main(["fit", str(synth_dir / "scan"), "--config", str(cfg), "--threads", "1",
                 "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["extra"]["support_points"] <= 6 ** 3 + 4


def test_slice(synth_dir, tmp_path):
    img = tmp_path / "s.ppm"
    assert main(["slice", str(synth_dir / "scan"), "--axis", "y", "--index", "0",
                 "--image", str(img)]) == EXIT_OK
    assert read_ppm(img).shape == (12, 12, 3)


def test_exit_codes(synth_dir, tmp_path):
    assert main(["slice", str(synth_dir / "scan"), "--index", "99", "--out", str(tmp_path)]) \
        == EXIT_DATA
    assert main(["stats", str(tmp_path / "missing")]) == EXIT_DATA
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"fit": {"method": "magic"}}))
    assert main(["fit", str(synth_dir / "scan"), "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"no_such_key": 1}))
    assert main(["stats", str(synth_dir / "scan"), "--config", str(bad)]) == EXIT_CONFIG
    assert main(["fit", str(synth_dir / "scan"), "--threads", "0"]) == EXIT_CONFIG


def test_solver_failure_exit(tmp_path):
    # 40 nonempty cells cannot fit in 8 voxels, so synth gives up
    assert main(["synth", "--k", "40", "--dims", "2", "2", "2", "--out", str(tmp_path)]) \
        == EXIT_SOLVER


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "graindiagrams", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    for cmd in ("synth", "stats", "fit", "rasterize", "eval", "slice"):
        assert cmd in res.stdout
