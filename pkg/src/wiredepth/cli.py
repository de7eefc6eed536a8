"""``wiredepth`` command line.

Exit codes: 0 ok, 1 data/validation error, 2 format error, 3 internal fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .depth import disparity_image, read_depth_png, read_mask_png, write_depth_png, write_mask_png
from .metrics import evaluate
from .partial import bfs_partial_mask
from .render import Provenance, rasterize

log = logging.getLogger("wiredepth")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run config")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--resolution", type=int, default=256)
    g.add_argument("--views", type=int, default=100)
    g.add_argument("--stroke-radius", type=float, default=None, help="pixels (default scales 1.5 px at 256)")
    g.add_argument("--z-near", type=float, default=0.5)
    g.add_argument("--z-far", type=float, default=2.5)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--zoom-fraction", type=float, default=0.2)
    g.add_argument("--zoom-complexity", type=int, default=24)
    g.add_argument("--partial", choices=("training", "none"), default="training")
    g.add_argument("--ratios", type=float, nargs=3, default=None, metavar=("TRAIN", "VAL", "TEST"))
    g.add_argument("--output-root", default="out", help=f"overridden by ${pl.OUTPUT_ROOT_ENV}")
    g.add_argument("-v", "--verbose", action="store_true")


def _config(a) -> pl.RunConfig:
    kw = dict(
        resolution=a.resolution, stroke_radius=a.stroke_radius, views=a.views, z_near=a.z_near,
        z_far=a.z_far, seed=a.seed, jobs=a.jobs, output_root=a.output_root,
        zoom_fraction=a.zoom_fraction, zoom_complexity=a.zoom_complexity, partial_policy=a.partial,
    )
    if a.ratios is not None:
        kw["split_ratios"] = tuple(a.ratios)
    return pl.RunConfig(**kw)


def _out_dir(cfg: pl.RunConfig, sub: str) -> Path:
    d = cfg.root() / sub
    d.mkdir(parents=True, exist_ok=True)
    return d


def _shape_paths(target: str) -> list[Path]:
    p = Path(target)
    return pl.discover_shapes(p) if p.is_dir() else [p]


# --- subcommands -------------------------------------------------------------


def run_render(a) -> int:
    cfg = _config(a)
    path = Path(a.shape)
    sid = pl.shape_id_for(path)
    g = pl.load_shape(path)
    out = _out_dir(cfg, f"render/{sid}")
    if a.isometric:
        cams = [(c, False, cfg.seed) for c in pl.benchmark_cameras(sid, cfg)]
    else:
        cams = pl.view_cameras(g, sid, replace(cfg, zoom_fraction=0.0))
    for vid, (cam, _, ts) in enumerate(cams):
        b = rasterize(g, cam, cfg.stroke_radius, cfg.disparity, Provenance(sid, vid, ts))
        write_mask_png(out / f"{vid:04d}_mask.png", b.mask)
        write_depth_png(out / f"{vid:04d}_depth.png", disparity_image(b.disparity, b.mask, cfg.disparity),
                        extra={"camera": cam.to_dict()})
    print(f"rendered {len(cams)} view(s) of {sid} to {out}")
    return 0


def run_dataset(a) -> int:
    cfg = _config(a)
    m = pl.cmd_dataset(cfg, a.shapes, a.split_file)
    with_partial = sum(1 for e in m.entries if e.k is not None)
    print(f"{len(m)} entries ({with_partial} with partial depth), {len(m.skipped)} skipped; "
          f"manifest {cfg.root() / 'manifest.jsonl'}")
    return 0


def run_split(a) -> int:
    if a.ids:
        ids = [ln.strip() for ln in Path(a.ids).read_text(encoding="utf-8").splitlines() if ln.strip()]
    else:
        ids = [pl.shape_id_for(p) for p in pl.discover_shapes(a.shapes)]
    ratios = tuple(a.ratios) if a.ratios else pl.DEFAULT_SPLIT_RATIOS
    assignment = pl.cmd_split(ids, ratios, a.seed)
    pl.write_split_file(a.out, assignment, ratios, a.seed)
    counts = {s: sum(1 for v in assignment.values() if v == s) for s in pl.SPLITS}
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def run_mask(a) -> int:
    cfg = _config(a)
    path = Path(a.shape)
    sid = pl.shape_id_for(path)
    g = pl.load_shape(path)
    cams = pl.view_cameras(g, sid, replace(cfg, zoom_fraction=0.0, views=max(cfg.views, a.view + 1)))
    cam, _, ts = cams[a.view]
    b = rasterize(g, cam, cfg.stroke_radius, cfg.disparity, Provenance(sid, a.view, ts))
    pair = bfs_partial_mask(b, g, a.k, a.mask_seed, measure=a.measure)
    out = _out_dir(cfg, f"mask/{sid}")
    stem = f"{a.view:04d}_k{a.k:g}"
    write_depth_png(out / f"{stem}_partial.png", disparity_image(np.nan_to_num(pair.partial), pair.mask, cfg.disparity))
    write_mask_png(out / f"{stem}_partialmask.png", pair.mask)
    print(f"coverage {pair.coverage:.4f} over {len(pair.revealed_edges)} edge(s), {pair.restarts} restart(s)")
    return 0


def run_score(a) -> int:
    cfg = _config(a)
    reports = pl.score_shapes(cfg, _shape_paths(a.shapes))
    files = pl.write_score_outputs(reports, _out_dir(cfg, "score"))
    print(f"{len(reports)} view(s) scored; wrote {', '.join(str(f) for f in files)}")
    return 0


def run_eval(a) -> int:
    gt = read_depth_png(a.gt)
    pred = read_depth_png(a.pred)
    mask = read_mask_png(a.mask) if a.mask else gt.validity
    rep = evaluate(np.where(pred.validity, pred.values, 0.0), gt.values, mask & gt.validity)
    print(json.dumps(rep.to_dict(), indent=1))
    return 0


def run_benchmark(a) -> int:
    cfg = _config(a)
    paths = _shape_paths(a.shapes)
    if a.split_file:
        test = {k for k, v in pl.read_split_file(a.split_file).items() if v == "test"}
        paths = [p for p in paths if pl.shape_id_for(p) in test]
    pred_dir = Path(a.predictions)
    if a.baseline:
        n = pl.write_reference_predictions(cfg, paths, pred_dir, a.K, a.baseline)
        print(f"wrote {n} {a.baseline} prediction(s) to {pred_dir}")
    out = _out_dir(cfg, "benchmark")
    res = pl.cmd_benchmark(cfg, paths, pred_dir, a.K, out)
    for name, rep in (("average", res.average), ("best", res.best)):
        m = rep.mean
        print(f"{name:8s} n={rep.n_samples} nmae={m['nmae']:.4f} absrel={m['absrel']:.4f} delta={m['delta_125']:.4f}")
    if res.missing:
        for f in res.missing:
            log.warning("missing prediction %s", f)
        print(f"{len(res.missing)}/{res.expected} prediction file(s) missing ({res.missing_rate:.2%})")
        if res.missing_rate > pl.MISSING_LIMIT:
            return pl.EXIT_DATA
    print(f"tables and figures in {out}")
    return 0


def run_fit(a) -> int:
    cfg = _config(a)
    res = pl.cmd_fit(a.depth, _out_dir(cfg, "fit"), a.mask, a.camera, split_tol=a.split_tol)
    print(res.summary())
    print(f"wrote {res.wire_path} and {res.ply_path}")
    return 0


def run_diffuse(a) -> int:
    from . import diffusion as df

    cfg = _config(a)
    out = _out_dir(cfg, "diffuse")
    tm = df.TwoModeConfig(diffusion_steps=a.train_steps)
    if a.action == "two-mode":
        rep = df.two_mode_experiment(cfg.seed, tm)
        doc = rep.to_dict()
        (out / "two_mode.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        print(f"regressor->mean {doc['regressor_to_mean']:.4f}  samples near a mode {doc['mode_fraction']:.2f}  "
              f"anchored to A {doc['anchored_fraction_a']:.2f}")
        return 0
    if a.action == "train":
        model, schedule, _, losses = df.train_two_mode(tm, cfg.seed)
        model_path = Path(a.model) if a.model else out / "model.bin"
        df.save_model(model_path, model, schedule)
        print(f"final loss {np.mean(losses[-100:]):.4f}; saved {model_path}")
        return 0
    if not a.model:
        raise pl.PipelineError("diffuse sample needs --model")
    model, schedule = df.load_model(a.model)
    mask, ya, _ = df.necker_fixture(model.size)
    m = np.zeros_like(mask)
    if a.anchor > 0:
        m = df.bfs_pixel_reveal(mask, a.anchor, np.random.default_rng(cfg.seed))
    ys = df.sample(df.condition_tensor(mask, np.nan_to_num(ya), m), model, schedule, cfg.seed,
                   steps=a.sample_steps, n=a.n)
    for i, y in enumerate(ys):
        write_depth_png(out / f"sample_{i:03d}.png", disparity_image(y, mask, cfg.disparity))
    print(f"wrote {len(ys)} sample(s) to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wiredepth", description="Wireframe sketch depth toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("render", help="render hemisphere (or isometric) views of one shape")
    s.add_argument("shape")
    s.add_argument("--isometric", action="store_true")
    _common(s)
    s.set_defaults(func=run_render)

    s = sub.add_parser("dataset", help="generate a dataset and manifest from a shape directory")
    s.add_argument("shapes")
    s.add_argument("--split-file")
    _common(s)
    s.set_defaults(func=run_dataset)

    s = sub.add_parser("split", help="assign shapes to train/val/test")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--ids", help="text file with one shape id per line")
    src.add_argument("--shapes", help="shape directory")
    s.add_argument("--ratios", type=float, nargs=3, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="split.json")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=run_split)

    s = sub.add_parser("mask", help="BFS partial-depth mask for one view")
    s.add_argument("shape")
    s.add_argument("--view", type=int, default=0)
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--mask-seed", type=int, default=0)
    s.add_argument("--measure", choices=("pixels", "edges"), default="pixels")
    _common(s)
    s.set_defaults(func=run_mask)

    s = sub.add_parser("score", help="APR and curve complexity per view")
    s.add_argument("shapes")
    _common(s)
    s.set_defaults(func=run_score)

    s = sub.add_parser("eval", help="metrics for one prediction against one ground truth")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("--mask")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=run_eval)

    s = sub.add_parser("benchmark", help="score K predictions per isometric view")
    s.add_argument("shapes")
    s.add_argument("predictions")
    s.add_argument("-K", type=int, default=5)
    s.add_argument("--split-file")
    s.add_argument("--baseline", choices=("mean", "oracle"), help="write reference predictions first")
    _common(s)
    s.set_defaults(func=run_benchmark)

    s = sub.add_parser("fit", help="lift a depth PNG and fit a line wireframe")
    s.add_argument("depth")
    s.add_argument("--mask")
    s.add_argument("--camera", help="camera JSON (default: the depth sidecar)")
    s.add_argument("--split-tol", type=float, default=1.0, help="pixel footprints")
    _common(s)
    s.set_defaults(func=run_fit)

    s = sub.add_parser("diffuse", help="toy diffusion: train, sample, two-mode experiment")
    s.add_argument("action", choices=("train", "sample", "two-mode"))
    s.add_argument("--model")
    s.add_argument("--train-steps", type=int, default=4000)
    s.add_argument("--sample-steps", type=int, default=None)
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--anchor", type=float, default=0.0, help="partial-depth coverage from mode A")
    _common(s)
    s.set_defaults(func=run_diffuse)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to the exit-code contract
        code = pl.exit_code_for(exc)
        if code == pl.EXIT_INTERNAL:
            log.exception("internal fault")
        print(f"wiredepth {args.command}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
