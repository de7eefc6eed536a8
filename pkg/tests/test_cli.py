import json
import subprocess
import sys
from pathlib import Path

import pytest

from helpers import LINE_FIXTURES
from wiredepth import pipeline as pl
from wiredepth.cli import main
from wiredepth.wireframe import dump_wireframe


@pytest.fixture
def shapes(tmp_path):
    d = tmp_path / "shapes"
    d.mkdir()
    for name in ("cube", "tetrahedron", "prism"):
        (d / f"{name}.json").write_text(dump_wireframe(LINE_FIXTURES[name]()))
    return d


@pytest.fixture(autouse=True)
def _no_env_root(monkeypatch):
    monkeypatch.delenv(pl.OUTPUT_ROOT_ENV, raising=False)


def run(tmp_path, *argv):
    return main([*argv, "--output-root", str(tmp_path / "out")] if argv[0] not in ("split", "eval") else list(argv))


def test_render_and_dataset(tmp_path, shapes, capsys):
    assert run(tmp_path, "render", str(shapes / "cube.json"), "--views", "2", "--resolution", "32") == 0
    assert (tmp_path / "out/render/cube/0001_depth.png").exists()
    assert main(["dataset", str(shapes), "--views", "2", "--resolution", "32", "--output-root", str(tmp_path / "ds")]) == 0
    assert "6 entries" in capsys.readouterr().out
    assert pl.manifest_problems(tmp_path / "ds") == []


def test_split_then_dataset(tmp_path, shapes):
    split = tmp_path / "split.json"
    assert run(tmp_path, "split", "--shapes", str(shapes), "--out", str(split)) == 0
    assert run(tmp_path, "dataset", str(shapes), "--views", "1", "--resolution", "32", "--split-file", str(split)) == 0
    m = pl.DatasetManifest.read(tmp_path / "out" / "manifest.jsonl")
    assert {e.split for e in m.entries} == set(pl.SPLITS)


def test_split_too_few_is_data_error(tmp_path):
    ids = tmp_path / "ids.txt"
    ids.write_text("a\nb\n")
    assert run(tmp_path, "split", "--ids", str(ids), "--out", str(tmp_path / "s.json")) == 1


def test_malformed_shape_is_format_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(tmp_path, "render", str(bad)) == 2


def test_mask_and_score(tmp_path, shapes):
    assert run(tmp_path, "mask", str(shapes / "cube.json"), "--k", "0.3", "--resolution", "48") == 0
    assert (tmp_path / "out/mask/cube/0000_k0.3_partialmask.png").exists()
    assert run(tmp_path, "score", str(shapes), "--views", "3", "--resolution", "48") == 0
    out = tmp_path / "out/score"
    assert (out / "scores.csv").exists() and (out / "scores.png").exists()


def test_benchmark_writes_tables_and_figures(tmp_path, shapes, capsys):
    pred = tmp_path / "pred"
    code = run(tmp_path, "benchmark", str(shapes), str(pred), "-K", "2", "--resolution", "48", "--baseline", "oracle")
    assert code == 0
    assert "nmae=0.0000" in capsys.readouterr().out
    out = tmp_path / "out/benchmark"
    for name in ("average.csv", "best.csv", "report.json", "metrics.png", "stratification.png"):
        assert (out / name).stat().st_size > 0


def test_benchmark_missing_predictions_exit_1(tmp_path, shapes):
    pred = tmp_path / "pred"
    assert run(tmp_path, "benchmark", str(shapes), str(pred), "-K", "1", "--resolution", "48", "--baseline", "mean") == 0
    pl.prediction_path(pred, "cube", 0, 0).unlink()
    assert run(tmp_path, "benchmark", str(shapes), str(pred), "-K", "1", "--resolution", "48") == 1


def test_eval_and_fit(tmp_path, shapes, capsys):
    run(tmp_path, "render", str(shapes / "cube.json"), "--views", "1", "--isometric")
    depth = tmp_path / "out/render/cube/0000_depth.png"
    capsys.readouterr()
    assert run(tmp_path, "eval", str(depth), str(depth)) == 0
    assert json.loads(capsys.readouterr().out)["nmae"] == 0.0
    assert run(tmp_path, "fit", str(depth)) == 0
    assert "12 edge" in capsys.readouterr().out


def test_fit_malformed_sidecar_exit_2(tmp_path, shapes):
    run(tmp_path, "render", str(shapes / "cube.json"), "--views", "1")
    depth = tmp_path / "out/render/cube/0000_depth.png"
    depth.with_suffix(".json").write_text('{"z_near": 0.5, "z_far": 2.5, "camera": {"view": "up"}}')
    assert run(tmp_path, "fit", str(depth)) == 2


def test_fit_empty_mask_exit_0(tmp_path, shapes):
    from wiredepth.depth import write_mask_png
    import numpy as np

    run(tmp_path, "render", str(shapes / "cube.json"), "--views", "1")
    empty = tmp_path / "empty.png"
    write_mask_png(empty, np.zeros((256, 256), bool))
    assert run(tmp_path, "fit", str(tmp_path / "out/render/cube/0000_depth.png"), "--mask", str(empty)) == 0


def test_env_root(tmp_path, shapes, monkeypatch):
    monkeypatch.setenv(pl.OUTPUT_ROOT_ENV, str(tmp_path / "env"))
    assert run(tmp_path, "render", str(shapes / "cube.json"), "--views", "1", "--resolution", "32") == 0
    assert (tmp_path / "env/render/cube/0000_mask.png").exists()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "wiredepth.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "benchmark" in r.stdout
