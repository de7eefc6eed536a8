import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import LINE_FIXTURES, brute_metrics, random_graph
from wiredepth import pipeline as pl
from wiredepth.depth import codes_to_disparity, disparity_to_codes, read_depth_png, read_mask_png
from wiredepth.render import rasterize
from wiredepth.wireframe import cylinder, dump_wireframe, load_wireframe_file, normalize_to_unit_sphere


def write_corpus(directory: Path, n_random: int = 0, seed: int = 0) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, fn in sorted(LINE_FIXTURES.items()):
        p = directory / f"{name}.json"
        p.write_text(dump_wireframe(fn()))
        out.append(p)
    p = directory / "cylinder.json"
    p.write_text(dump_wireframe(cylinder()))
    out.append(p)
    rng = np.random.default_rng(seed)
    for i in range(n_random):
        p = directory / f"rand{i:03d}.json"
        p.write_text(dump_wireframe(random_graph(rng, int(rng.integers(3, 20)))))
        out.append(p)
    return out


def tree_digest(root: Path) -> dict[str, str]:
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(autouse=True)
def _no_env_root(monkeypatch):
    monkeypatch.delenv(pl.OUTPUT_ROOT_ENV, raising=False)


# --- split -------------------------------------------------------------------


def test_split_default_counts():
    ids = [f"s{i:05d}" for i in range(10076)]
    a = pl.cmd_split(ids, pl.DEFAULT_SPLIT_RATIOS, 0)
    counts = [sum(v == s for v in a.values()) for s in pl.SPLITS]
    assert counts == [9068, 504, 504]


def test_split_all_train():
    a = pl.cmd_split([f"x{i}" for i in range(7)], (1, 0, 0), 3)
    assert set(a.values()) == {"train"}


def test_split_seeds_permute():
    ids = [f"x{i}" for i in range(50)]
    a, b = pl.cmd_split(ids, pl.DEFAULT_SPLIT_RATIOS, 1), pl.cmd_split(ids, pl.DEFAULT_SPLIT_RATIOS, 2)
    assert a != b
    assert sorted(a.values()) == sorted(b.values())


def test_split_errors():
    with pytest.raises(pl.PipelineError):
        pl.cmd_split(["a", "b"], pl.DEFAULT_SPLIT_RATIOS, 0)
    with pytest.raises(pl.PipelineError):
        pl.cmd_split(["a", "b", "c"], (0.5, 0.2, 0.2), 0)
    with pytest.raises(pl.PipelineError):
        pl.cmd_split(["a", "a", "b"], (1, 0, 0), 0)


def test_split_file_roundtrip(tmp_path):
    a = pl.cmd_split([f"x{i}" for i in range(20)], pl.DEFAULT_SPLIT_RATIOS, 4)
    pl.write_split_file(tmp_path / "s.json", a, pl.DEFAULT_SPLIT_RATIOS, 4)
    assert pl.read_split_file(tmp_path / "s.json") == a


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 3000), st.lists(st.floats(0.01, 1), min_size=3, max_size=3), st.integers(0, 99))
def test_split_sizes_properties(n, raw, seed):
    ratios = np.array(raw) / sum(raw)
    sizes = pl.split_sizes(n, ratios)
    assert sum(sizes) == n
    assert all(s >= 1 for s in sizes)
    assert all(abs(s - r * n) < 1 + 1e-9 or s == 1 for s, r in zip(sizes, ratios))
    a = pl.cmd_split([f"i{k}" for k in range(n)], ratios, seed)
    assert len(a) == n


# --- dataset -----------------------------------------------------------------


def test_task_seed_is_pure():
    assert pl.task_seed(1, "cube", 3) == pl.task_seed(1, "cube", 3)
    assert len({pl.task_seed(1, "cube", v) for v in range(100)}) == 100
    assert pl.task_seed(1, "cube", 3) != pl.task_seed(2, "cube", 3)


def test_small_dataset_layout_and_speed(tmp_path):
    shapes = tmp_path / "shapes"
    shapes.mkdir()
    (shapes / "cube.json").write_text(dump_wireframe(LINE_FIXTURES["cube"]()))
    cfg = pl.RunConfig(resolution=64, views=4, output_root=str(tmp_path / "out"))
    pl.cmd_dataset(cfg, shapes)  # warm imports and caches
    t0 = time.perf_counter()
    m = pl.cmd_dataset(cfg, shapes)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    assert len(m) == 4
    root = tmp_path / "out"
    for e in m.entries:
        for kind in ("mask", "depth", "partial", "partialmask"):
            assert e.files[kind] == f"train/cube/{e.view_id:04d}_{kind}.png"
    assert pl.manifest_problems(root) == []
    e = m.entries[0]
    mask = read_mask_png(root / e.files["mask"])
    depth = read_depth_png(root / e.files["depth"])
    assert np.array_equal(mask, depth.validity)
    pm = read_mask_png(root / e.files["partialmask"])
    assert not (pm & ~mask).any()


def test_thousand_entries_half_partial(tmp_path):
    shapes = tmp_path / "shapes"
    write_corpus(shapes, n_random=3)
    cfg = pl.RunConfig(resolution=32, views=100, output_root=str(tmp_path / "out"), stroke_radius=0.75)
    m = pl.cmd_dataset(cfg, shapes)
    assert len(m) == 1000
    frac = np.mean([e.k is not None for e in m.entries])
    assert abs(frac - 0.5) < 0.05
    ids = [(e.shape_id, e.view_id) for e in m.entries]
    assert len(set(ids)) == len(ids)
    assert pl.manifest_problems(tmp_path / "out") == []


def test_dataset_deterministic(tmp_path):
    shapes = tmp_path / "shapes"
    write_corpus(shapes)
    for run in ("a", "b"):
        pl.cmd_dataset(pl.RunConfig(resolution=32, views=3, output_root=str(tmp_path / run), seed=5), shapes)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_dataset_splits_by_shape(tmp_path):
    shapes = tmp_path / "shapes"
    write_corpus(shapes)
    cfg = pl.RunConfig(resolution=32, views=3, output_root=str(tmp_path / "out"), split_ratios=(0.6, 0.2, 0.2))
    m = pl.cmd_dataset(cfg, shapes)
    by_shape = {}
    for e in m.entries:
        by_shape.setdefault(e.shape_id, set()).add(e.split)
        assert e.files["mask"].startswith(f"{e.split}/{e.shape_id}/")
    assert all(len(s) == 1 for s in by_shape.values())
    assert {s.pop() for s in by_shape.values()} == set(pl.SPLITS)


def test_zoom_for_complex_shapes(tmp_path):
    shapes = tmp_path / "shapes"
    write_corpus(shapes)
    cfg = pl.RunConfig(resolution=32, views=10, zoom_fraction=1.0, zoom_complexity=12,
                       output_root=str(tmp_path / "out"))
    m = pl.cmd_dataset(cfg, shapes)
    for e in m.entries:
        cc = {"cube": 12, "prism": 9, "tetrahedron": 6, "pyramid": 8, "cylinder": 8, "house": 17, "lshape": 18}[e.shape_id]
        assert e.zoomed == (cc > 12)
        if e.zoomed:
            assert e.camera["half_width"] < cfg.half_width


def test_skip_threshold(tmp_path):
    shapes = tmp_path / "shapes"
    write_corpus(shapes)
    (shapes / "broken.json").write_text("{not json")
    with pytest.raises(pl.PipelineError, match="skipped 1/8"):
        pl.cmd_dataset(pl.RunConfig(resolution=32, views=2, output_root=str(tmp_path / "a")), shapes)
    m = pl.cmd_dataset(pl.RunConfig(resolution=32, views=2, output_root=str(tmp_path / "b"), skip_threshold=0.2), shapes)
    assert len(m) == 14 and m.skipped[0]["shape_id"] == "broken"


def test_env_root_override(tmp_path, monkeypatch):
    shapes = tmp_path / "shapes"
    write_corpus(shapes)
    monkeypatch.setenv(pl.OUTPUT_ROOT_ENV, str(tmp_path / "env"))
    pl.cmd_dataset(pl.RunConfig(resolution=32, views=1, output_root=str(tmp_path / "cfg")), shapes)
    assert (tmp_path / "env" / "manifest.jsonl").exists()
    assert not (tmp_path / "cfg").exists()


def test_run_config_validation():
    with pytest.raises(ValueError):
        pl.RunConfig(resolution=8)
    with pytest.raises(ValueError):
        pl.RunConfig(z_near=2, z_far=1)
    assert pl.RunConfig(resolution=512).stroke_radius == 3.0
    assert pl.RunConfig(resolution=64).stroke_radius == 0.5


# --- benchmark ---------------------------------------------------------------


def test_benchmark_viewpoint_count():
    assert len(pl.benchmark_viewpoints([f"t{i}" for i in range(504)])) == 2016


def _bench_cfg(tmp_path):
    return pl.RunConfig(resolution=64, output_root=str(tmp_path / "out"))


def test_benchmark_oracle_predictor(tmp_path):
    paths = write_corpus(tmp_path / "shapes")[:3]
    cfg = _bench_cfg(tmp_path)
    pl.write_reference_predictions(cfg, paths, tmp_path / "pred", k=2, kind="oracle")
    res = pl.cmd_benchmark(cfg, paths, tmp_path / "pred", k=2, out_dir=tmp_path / "rep")
    assert res.average.n_samples == 12 and not res.missing
    for rep in (res.average, res.best):
        assert rep.mean["mae"] == rep.mean["nmae"] == rep.mean["absrel"] == 0.0
        assert rep.mean["delta_125"] == 1.0
    names = {p.name for p in (tmp_path / "rep").iterdir()}
    assert {"average.csv", "best.csv", "stratification.csv", "per_view.csv", "report.json",
            "metrics.png", "stratification.png"} <= names


def test_benchmark_mean_baseline_matches_oracle(tmp_path):
    paths = write_corpus(tmp_path / "shapes")[:2]
    cfg = _bench_cfg(tmp_path)
    pl.write_reference_predictions(cfg, paths, tmp_path / "pred", k=1, kind="mean")
    res = pl.cmd_benchmark(cfg, paths, tmp_path / "pred", k=1)
    want = []
    for p in paths:
        g = normalize_to_unit_sphere(load_wireframe_file(p))
        for cam in pl.benchmark_cameras(p.stem, cfg):
            b = rasterize(g, cam, cfg.stroke_radius)
            y, _ = codes_to_disparity(disparity_to_codes(b.disparity, b.mask))
            const = np.where(b.mask, b.disparity[b.mask].mean(), 0.0)
            pred, _ = codes_to_disparity(disparity_to_codes(const, b.mask))
            want.append(brute_metrics(pred, y, b.mask))
    want = np.mean(want, axis=0)
    got = res.average.mean
    assert np.allclose([got["mae"], got["nmae"], got["absrel"], got["delta_125"]], want, rtol=0, atol=1e-12)
    # K = 1: both aggregation modes agree
    assert res.average.mean == res.best.mean


def test_benchmark_missing_listed(tmp_path):
    paths = write_corpus(tmp_path / "shapes")[:2]
    cfg = _bench_cfg(tmp_path)
    pl.write_reference_predictions(cfg, paths, tmp_path / "pred", k=2, kind="mean")
    gone = pl.prediction_path(tmp_path / "pred", paths[0].stem, 1, 1)
    gone.unlink()
    res = pl.cmd_benchmark(cfg, paths, tmp_path / "pred", k=2)
    assert res.missing == [str(gone)]
    assert res.average.n_samples == 7
    assert res.missing_rate == pytest.approx(1 / 16)


def test_benchmark_rejects_plane_mismatch(tmp_path):
    paths = write_corpus(tmp_path / "shapes")[:1]
    cfg = _bench_cfg(tmp_path)
    pl.write_reference_predictions(cfg, paths, tmp_path / "pred", k=1)
    side = pl.prediction_path(tmp_path / "pred", paths[0].stem, 0, 0).with_suffix(".json")
    doc = json.loads(side.read_text())
    doc["z_far"] = 3.0
    side.write_text(json.dumps(doc))
    with pytest.raises(pl.PipelineError):
        pl.cmd_benchmark(cfg, paths, tmp_path / "pred", k=1)


def test_score_outputs(tmp_path):
    paths = write_corpus(tmp_path / "shapes")[:2]
    reps = pl.score_shapes(pl.RunConfig(resolution=48), paths, views=5)
    files = pl.write_score_outputs(reps, tmp_path / "score")
    assert len(reps) == 10 and all(f.exists() for f in files)


# --- fit ---------------------------------------------------------------------


def test_fit_cube_from_dataset(tmp_path):
    shapes = tmp_path / "shapes"
    shapes.mkdir()
    (shapes / "cube.json").write_text(dump_wireframe(LINE_FIXTURES["cube"]()))
    # seed 0 draws a generic view; near-horizontal draws flatten two faces into lines
    cfg = pl.RunConfig(views=1, output_root=str(tmp_path / "ds"), seed=0)
    m = pl.cmd_dataset(cfg, shapes)
    res = pl.cmd_fit(tmp_path / "ds" / m.entries[0].files["depth"], tmp_path / "fit")
    g = load_wireframe_file(res.wire_path)
    assert len(g.edges) == 12
    assert res.ply_path.read_text().startswith("ply\n")


def test_fit_empty_mask(tmp_path, caplog):
    from wiredepth.camera import OrthoCamera
    from wiredepth.depth import DisparityConfig, disparity_image, write_depth_png

    cam = OrthoCamera.looking([0, 0, 1], image_size=(32, 32))
    write_depth_png(tmp_path / "d.png", disparity_image(np.zeros((32, 32)), np.zeros((32, 32), bool), DisparityConfig()),
                    extra={"camera": cam.to_dict()})
    res = pl.cmd_fit(tmp_path / "d.png", tmp_path / "fit")
    assert res.n_edges == 0 and res.n_points == 0
    assert "empty sketch mask" in caplog.text
    assert json.loads(res.wire_path.read_text()) == {"vertices": [], "edges": []}


def test_exit_codes():
    from wiredepth.depth import DepthFormatError
    from wiredepth.wireframe import WireframeParseError

    assert pl.exit_code_for(DepthFormatError("x")) == 2
    assert pl.exit_code_for(WireframeParseError("x")) == 2
    assert pl.exit_code_for(ValueError("x")) == 1
    assert pl.exit_code_for(RuntimeError("x")) == 3
    assert pl.exit_code_for(pl.PipelineError("x", 2)) == 2
