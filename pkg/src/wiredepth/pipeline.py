"""Dataset generation, splits, benchmark scoring and fitting as plain functions.

Every (shape, view) task derives its own RNG stream from the global seed, the
shape id and the view id, so outputs do not depend on worker count or
scheduling order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .camera import DEFAULT_DISTANCE, DEFAULT_HALF_WIDTH, OrthoCamera, isometric_benchmark_views, sample_hemisphere_views, zoom_augment
from .complexity import ComplexityReport, complexity_report, curve_complexity, stratify
from .depth import (
    DepthFormatError,
    DisparityConfig,
    codes_to_disparity,
    decode_depth_png,
    disparity_to_codes,
    disparity_image,
    read_mask_png,
    read_sidecar,
    sidecar_dict,
    write_depth_png,
    write_mask_png,
)
from .metrics import AggregationMode, MetricError, aggregate, evaluate, write_table_csv
from .partial import PartialDepthPair, sample_training_condition
from .reconstruct import backproject, extract_topology, fit_wireframe, write_ply
from .render import EmptyRenderError, Provenance, RenderBundle, rasterize
from .wireframe import (
    WireframeGraph,
    WireframeParseError,
    WireframeValidationError,
    dump_wireframe,
    load_wireframe_file,
    normalize_to_unit_sphere,
)

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "WIREDEPTH_OUTPUT_ROOT"
SPLITS = ("train", "val", "test")
DEFAULT_SPLIT_RATIOS = (0.9, 0.05, 0.05)
SHAPE_SUFFIXES = {".json": "wirejson", ".wire": "wirejson", ".obj": "objlines"}
BENCHMARK_JITTER = 5.0
MISSING_LIMIT = 0.01

EXIT_OK, EXIT_DATA, EXIT_FORMAT, EXIT_INTERNAL = 0, 1, 2, 3


class PipelineError(Exception):
    """Error carrying the process exit code it maps to."""

    def __init__(self, message: str, code: int = EXIT_DATA):
        super().__init__(message)
        self.code = code


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        return exc.code
    if isinstance(exc, (WireframeParseError, DepthFormatError, json.JSONDecodeError)):
        return EXIT_FORMAT
    if isinstance(exc, (WireframeValidationError, MetricError, EmptyRenderError, ValueError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_INTERNAL


# --- configuration -----------------------------------------------------------


def default_stroke_radius(resolution: int) -> float:
    """1.5 px at 256^2, scaled with resolution and floored at the 0.5 px minimum."""
    return max(0.5, 1.5 * resolution / 256.0)


@dataclass(frozen=True)
class RunConfig:
    resolution: int = 256
    stroke_radius: float | None = None
    views: int = 100
    zoom_fraction: float = 0.2
    zoom_complexity: int = 24
    z_near: float = 0.5
    z_far: float = 2.5
    partial_policy: str = "training"  # training | none
    seed: int = 0
    output_root: str = "out"
    jobs: int = 1
    split_ratios: tuple[float, float, float] = (1.0, 0.0, 0.0)
    skip_threshold: float = 0.05
    half_width: float = DEFAULT_HALF_WIDTH
    distance: float = DEFAULT_DISTANCE

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")
        if self.views < 1:
            raise ValueError("views must be >= 1")
        if not 0.0 <= self.zoom_fraction <= 1.0:
            raise ValueError("zoom fraction must lie in [0, 1]")
        if self.partial_policy not in ("training", "none"):
            raise ValueError(f"unknown partial policy {self.partial_policy!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.stroke_radius is None:
            object.__setattr__(self, "stroke_radius", default_stroke_radius(self.resolution))
        object.__setattr__(self, "split_ratios", tuple(float(r) for r in self.split_ratios))
        DisparityConfig(self.z_near, self.z_far)

    @property
    def disparity(self) -> DisparityConfig:
        return DisparityConfig(self.z_near, self.z_far)

    @property
    def camera_kw(self) -> dict:
        return {
            "half_width": self.half_width,
            "image_size": (self.resolution, self.resolution),
            "distance": self.distance,
        }

    def root(self) -> Path:
        """Output root; the environment variable wins over the config value."""
        return Path(os.environ.get(OUTPUT_ROOT_ENV) or self.output_root)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d


# --- shapes and seeds --------------------------------------------------------


def shape_id_for(path: Path) -> str:
    return Path(path).stem


def discover_shapes(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise PipelineError(f"shape directory {directory} does not exist")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in SHAPE_SUFFIXES and p.is_file())


def load_shape(path: Path) -> WireframeGraph:
    return normalize_to_unit_sphere(load_wireframe_file(path))


def task_seed(seed: int, shape_id: str, view_id: int) -> int:
    """Schedule-independent 63-bit seed for one (shape, view) task."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(shape_id.encode("utf-8")), int(view_id)])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def shape_seed(seed: int, shape_id: str) -> int:
    return task_seed(seed, shape_id, 2**32 - 1)


# --- splits ------------------------------------------------------------------


def split_sizes(n: int, ratios) -> list[int]:
    """Largest-remainder apportionment of ``n`` items; ties go to the earlier part."""
    ratios = np.asarray(ratios, dtype=float)
    if (ratios < 0).any() or not np.isclose(ratios.sum(), 1.0):
        raise PipelineError("split ratios must be nonnegative and sum to 1")
    parts = int((ratios > 0).sum())
    if n < parts:
        raise PipelineError(f"{n} shape(s) cannot fill {parts} nonempty split part(s)")
    raw = ratios * n
    sizes = np.floor(raw + 1e-9).astype(int)
    rem = raw - sizes
    short = n - int(sizes.sum())
    order = sorted(range(len(ratios)), key=lambda i: (-round(rem[i], 9), i))
    for i in order[:short]:
        sizes[i] += 1
    if ((ratios > 0) & (sizes == 0)).any():
        # every requested part gets at least one shape, taken from the largest
        for i in np.flatnonzero((ratios > 0) & (sizes == 0)):
            sizes[int(np.argmax(sizes))] -= 1
            sizes[i] += 1
    return [int(s) for s in sizes]


def cmd_split(shape_ids, ratios=DEFAULT_SPLIT_RATIOS, seed: int = 0) -> dict[str, str]:
    """Shape id -> split name after a seeded shuffle of the sorted ids."""
    shape_ids = list(shape_ids)
    ids = sorted(set(shape_ids))
    if len(ids) != len(shape_ids):
        raise PipelineError("duplicate shape ids")
    sizes = split_sizes(len(ids), ratios)
    perm = np.random.default_rng(seed).permutation(len(ids))
    out: dict[str, str] = {}
    pos = 0
    for name, size in zip(SPLITS, sizes):
        for i in perm[pos : pos + size]:
            out[ids[int(i)]] = name
        pos += size
    return out


def write_split_file(path, assignment: dict[str, str], ratios, seed: int) -> Path:
    path = Path(path)
    doc = {
        "seed": int(seed),
        "ratios": [float(r) for r in ratios],
        "splits": {s: sorted(k for k, v in assignment.items() if v == s) for s in SPLITS},
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_split_file(path) -> dict[str, str]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return {sid: name for name in SPLITS for sid in doc["splits"].get(name, [])}
    except (KeyError, AttributeError, TypeError) as exc:
        raise PipelineError(f"malformed split file {path}: {exc}", EXIT_FORMAT) from exc


# --- dataset -----------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    shape_id: str
    view_id: int
    seed: int
    split: str
    camera: dict
    zoomed: bool
    k: float | None
    coverage: float
    files: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.entries)

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                entries.append(ManifestEntry(**json.loads(line)))
        return cls(entries)

    def files(self) -> list[str]:
        return [f for e in self.entries for f in e.files.values()]


def view_cameras(g: WireframeGraph, shape_id: str, cfg: RunConfig) -> list[tuple[OrthoCamera, bool, int]]:
    """(camera, zoomed, task seed) per view of one shape."""
    cams = sample_hemisphere_views(cfg.views, shape_seed(cfg.seed, shape_id), **cfg.camera_kw)
    complex_shape = curve_complexity(g) > cfg.zoom_complexity
    out = []
    for vid, cam in enumerate(cams):
        ts = task_seed(cfg.seed, shape_id, vid)
        rng = np.random.default_rng(ts)
        zoomed = complex_shape and rng.random() < cfg.zoom_fraction
        if zoomed:
            cam = zoom_augment(cam, g, int(rng.integers(2**63 - 1)))
        out.append((cam, bool(zoomed), ts))
    return out


def _write_view(root: Path, rel_dir: str, vid: int, bundle: RenderBundle, pair: PartialDepthPair, cfg: RunConfig) -> dict:
    d = root / rel_dir
    d.mkdir(parents=True, exist_ok=True)
    stem = f"{vid:04d}"
    cam = bundle.camera.to_dict()
    files = {}
    write_mask_png(d / f"{stem}_mask.png", bundle.mask)
    files["mask"] = f"{rel_dir}/{stem}_mask.png"
    write_depth_png(
        d / f"{stem}_depth.png",
        disparity_image(bundle.disparity, bundle.mask, cfg.disparity),
        extra={"camera": cam},
    )
    files["depth"] = f"{rel_dir}/{stem}_depth.png"
    files["depth_sidecar"] = f"{rel_dir}/{stem}_depth.json"
    write_depth_png(d / f"{stem}_partial.png", disparity_image(np.nan_to_num(pair.partial), pair.mask, cfg.disparity))
    files["partial"] = f"{rel_dir}/{stem}_partial.png"
    files["partial_sidecar"] = f"{rel_dir}/{stem}_partial.json"
    write_mask_png(d / f"{stem}_partialmask.png", pair.mask)
    files["partialmask"] = f"{rel_dir}/{stem}_partialmask.png"
    return files


def _shape_task(args) -> tuple[list[ManifestEntry], list[dict]]:
    path, split, cfg = args
    sid = shape_id_for(path)
    try:
        g = load_shape(path)
    except (WireframeParseError, WireframeValidationError, ValueError, OSError) as exc:
        return [], [{"shape_id": sid, "view_id": None, "reason": f"{type(exc).__name__}: {exc}"}]
    root = cfg.root()
    entries, skipped = [], []
    for vid, (cam, zoomed, ts) in enumerate(view_cameras(g, sid, cfg)):
        try:
            bundle = rasterize(g, cam, cfg.stroke_radius, cfg.disparity, Provenance(sid, vid, ts))
        except EmptyRenderError as exc:
            skipped.append({"shape_id": sid, "view_id": vid, "reason": str(exc)})
            continue
        if cfg.partial_policy == "training":
            pair = sample_training_condition(bundle, g, ts)
        else:
            pair = PartialDepthPair.empty(bundle.shape)
        files = _write_view(root, f"{split}/{sid}", vid, bundle, pair, cfg)
        entries.append(
            ManifestEntry(sid, vid, ts, split, cam.to_dict(), zoomed, pair.k, float(pair.coverage), files)
        )
    return entries, skipped


def cmd_dataset(cfg: RunConfig, shape_dir, split_file=None) -> DatasetManifest:
    """Render every shape under ``shape_dir`` into the configured output root.

    Work is farmed out per shape; the manifest is assembled and written by
    the calling process only.
    """
    paths = discover_shapes(shape_dir)
    if not paths:
        raise PipelineError(f"no shape files in {shape_dir}")
    ids = [shape_id_for(p) for p in paths]
    if len(set(ids)) != len(ids):
        raise PipelineError("shape ids (file stems) must be unique")
    if split_file is not None:
        assignment = read_split_file(split_file)
    else:
        assignment = cmd_split(ids, cfg.split_ratios, cfg.seed)
    tasks = [(p, assignment.get(sid, "train"), cfg) for p, sid in zip(paths, ids)]
    root = cfg.root()
    root.mkdir(parents=True, exist_ok=True)
    if cfg.jobs == 1:
        results = [_shape_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_shape_task, tasks, chunksize=1))
    manifest = DatasetManifest()
    for entries, skipped in results:
        manifest.entries.extend(entries)
        manifest.skipped.extend(skipped)
    manifest.entries.sort(key=lambda e: (e.shape_id, e.view_id))
    (root / "manifest.jsonl").write_text(manifest.to_jsonl(), encoding="utf-8")
    for s in manifest.skipped:
        log.warning("skipped %s view %s: %s", s["shape_id"], s["view_id"], s["reason"])
    bad_shapes = {s["shape_id"] for s in manifest.skipped if s["view_id"] is None}
    rate = len(bad_shapes) / len(paths)
    if rate > cfg.skip_threshold:
        raise PipelineError(f"skipped {len(bad_shapes)}/{len(paths)} shapes ({rate:.1%} > {cfg.skip_threshold:.1%})")
    return manifest


def manifest_problems(root) -> list[str]:
    """Files on disk not in the manifest, and manifest files not on disk."""
    root = Path(root)
    listed = DatasetManifest.read(root / "manifest.jsonl").files()
    on_disk = {p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file() and p.name != "manifest.jsonl"}
    problems = [f"missing on disk: {f}" for f in listed if f not in on_disk]
    problems += [f"unreferenced: {f}" for f in sorted(on_disk - set(listed))]
    seen = set()
    for f in listed:
        if f in seen:
            problems.append(f"listed twice: {f}")
        seen.add(f)
    return problems


# --- benchmark ---------------------------------------------------------------


def benchmark_viewpoints(shape_ids) -> list[tuple[str, int]]:
    return [(sid, v) for sid in sorted(shape_ids) for v in range(4)]


def benchmark_cameras(shape_id: str, cfg: RunConfig) -> list[OrthoCamera]:
    return isometric_benchmark_views(BENCHMARK_JITTER, shape_seed(cfg.seed, shape_id), **cfg.camera_kw)


def render_benchmark(cfg: RunConfig, shape_paths) -> dict[tuple[str, int], tuple[RenderBundle, WireframeGraph]]:
    out = {}
    for path in shape_paths:
        sid = shape_id_for(path)
        g = load_shape(path)
        for vid, cam in enumerate(benchmark_cameras(sid, cfg)):
            out[(sid, vid)] = (rasterize(g, cam, cfg.stroke_radius, cfg.disparity, Provenance(sid, vid, cfg.seed)), g)
    return out


def prediction_path(pred_dir, shape_id: str, view_id: int, draw: int) -> Path:
    return Path(pred_dir) / shape_id / f"{view_id:04d}_{draw}.png"


def write_reference_predictions(cfg: RunConfig, shape_paths, pred_dir, k: int = 5, kind: str = "mean") -> int:
    """Write ``k`` draws per benchmark view from a reference predictor.

    ``kind="mean"`` fills every stroke pixel with the ground-truth mean
    (constant baseline); ``"oracle"`` copies the ground truth.
    """
    if kind not in ("mean", "oracle"):
        raise ValueError(f"unknown reference predictor {kind!r}")
    n = 0
    for (sid, vid), (bundle, _) in render_benchmark(cfg, shape_paths).items():
        y = np.nan_to_num(bundle.disparity)
        if kind == "mean":
            y = np.where(bundle.mask, float(bundle.disparity[bundle.mask].mean()), 0.0)
        for draw in range(k):
            p = prediction_path(pred_dir, sid, vid, draw)
            p.parent.mkdir(parents=True, exist_ok=True)
            write_depth_png(p, disparity_image(y, bundle.mask, cfg.disparity))
            n += 1
    return n


def read_prediction(path: Path, cfg: RunConfig) -> np.ndarray:
    """Disparity from a prediction PNG; a missing sidecar falls back to the run's planes."""
    side = path.with_suffix(".json")
    doc = read_sidecar(path) if side.exists() else sidecar_dict(cfg.disparity)
    img = decode_depth_png(path.read_bytes(), doc)
    if (img.config.z_near, img.config.z_far) != (cfg.z_near, cfg.z_far):
        raise PipelineError(f"{path}: depth planes {img.config} differ from the run config", EXIT_FORMAT)
    return np.where(img.validity, img.values, 0.0)


@dataclass
class BenchmarkResult:
    average: object
    best: object
    per_view: list[dict]
    strata: dict
    missing: list[str]
    expected: int

    @property
    def missing_rate(self) -> float:
        return len(self.missing) / self.expected if self.expected else 0.0


def cmd_benchmark(cfg: RunConfig, shape_paths, pred_dir, k: int = 5, out_dir=None,
                  apr_bins=(0.0, 0.05, 0.1, 0.2), complexity_bins=(0, 10, 20, 40)) -> BenchmarkResult:
    """Score K draws per isometric view against freshly rendered ground truth.

    Views with any missing draw are excluded and their missing files listed.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    shape_paths = list(shape_paths)
    gt = render_benchmark(cfg, shape_paths)
    groups, reports, per_view, missing = [], [], [], []
    for (sid, vid), (bundle, g) in sorted(gt.items()):
        paths = [prediction_path(pred_dir, sid, vid, d) for d in range(k)]
        absent = [str(p) for p in paths if not p.exists()]
        if absent:
            missing.extend(absent)
            continue
        # compare against the ground truth as it would be stored on disk
        y, _ = codes_to_disparity(disparity_to_codes(bundle.disparity, bundle.mask))
        group = [evaluate(read_prediction(p, cfg), y, bundle.mask) for p in paths]
        groups.append(group)
        rep = complexity_report(bundle, g)
        reports.append(rep)
        avg = float(np.mean([r.nmae for r in group]))
        per_view.append({"shape_id": sid, "view_id": vid, "apr": rep.apr, "curve_complexity": rep.curve_complexity,
                         "nmae_average": avg, "nmae_best": min(r.nmae for r in group)})
    expected = len(gt) * k
    if not groups:
        raise PipelineError(f"no complete prediction groups under {pred_dir}")
    result = BenchmarkResult(
        aggregate(groups, AggregationMode.AVERAGE),
        aggregate(groups, AggregationMode.BEST),
        per_view,
        {
            "apr": stratify(reports, list(apr_bins), "apr", [v["nmae_average"] for v in per_view]),
            "curve_complexity": stratify(reports, list(complexity_bins), "curve_complexity",
                                         [v["nmae_average"] for v in per_view]),
        },
        missing,
        expected,
    )
    if out_dir is not None:
        write_benchmark_outputs(result, out_dir)
    return result


def _dict_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def strata_rows(strata: dict) -> list[dict]:
    rows = []
    for key, bins in strata.items():
        for b in bins:
            rows.append({"key": key, "lower": b.lower, "upper": b.upper, "count": b.count,
                         "mean_apr": b.mean_apr, "mean_complexity": b.mean_complexity,
                         "mean_nmae": b.mean_value})
    return rows


def write_benchmark_outputs(result: BenchmarkResult, out_dir) -> list[Path]:
    from . import plots

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rep in (("average", result.average), ("best", result.best)):
        p = out / f"{name}.csv"
        p.write_text(write_table_csv([rep]), encoding="utf-8")
        written.append(p)
    p = out / "per_view.csv"
    p.write_text(_dict_csv(result.per_view), encoding="utf-8")
    written.append(p)
    p = out / "stratification.csv"
    p.write_text(_dict_csv(strata_rows(result.strata)), encoding="utf-8")
    written.append(p)
    p = out / "report.json"
    doc = {"average": result.average.to_dict(), "best": result.best.to_dict(), "expected_files": result.expected,
           "missing": result.missing, "missing_rate": result.missing_rate}
    p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written.append(p)
    written += plots.benchmark_figures(result, out)
    return written


# --- scoring -----------------------------------------------------------------


def score_shapes(cfg: RunConfig, shape_paths, views: int | None = None) -> list[ComplexityReport]:
    """APR and curve complexity for every hemisphere view of every shape."""
    reports = []
    c = replace(cfg, views=views or cfg.views)
    for path in shape_paths:
        sid = shape_id_for(path)
        g = load_shape(path)
        for vid, (cam, _, ts) in enumerate(view_cameras(g, sid, replace(c, zoom_fraction=0.0))):
            try:
                bundle = rasterize(g, cam, c.stroke_radius, c.disparity, Provenance(sid, vid, ts))
            except EmptyRenderError as exc:
                log.warning("score: %s view %d: %s", sid, vid, exc)
                continue
            reports.append(complexity_report(bundle, g))
    return reports


def write_score_outputs(reports: list[ComplexityReport], out_dir) -> list[Path]:
    from . import plots

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "scores.csv"
    p.write_text(_dict_csv([r.to_dict() for r in reports]), encoding="utf-8")
    return [p] + plots.score_figures(reports, out)


# --- fitting -----------------------------------------------------------------


@dataclass
class FitOutcome:
    wire_path: Path
    ply_path: Path
    n_points: int
    n_edges: int
    residuals: tuple[float, ...]

    def summary(self) -> str:
        if not self.residuals:
            return f"{self.n_points} points, 0 edges"
        r = np.asarray(self.residuals)
        return (f"{self.n_points} points, {self.n_edges} edges, residual mean {r.mean():.4g} "
                f"max {r.max():.4g}")


def load_camera(depth_path, camera_path=None) -> OrthoCamera:
    try:
        if camera_path is not None:
            doc = json.loads(Path(camera_path).read_text(encoding="utf-8"))
            doc = doc.get("camera", doc)
        else:
            doc = read_sidecar(depth_path)["camera"]
        return OrthoCamera.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise PipelineError(f"malformed camera sidecar: {exc}", EXIT_FORMAT) from exc


def cmd_fit(depth_path, out_dir, mask_path=None, camera_path=None, **fit_kw) -> FitOutcome:
    depth_path = Path(depth_path)
    img = decode_depth_png(depth_path.read_bytes(), read_sidecar(depth_path))
    cam = load_camera(depth_path, camera_path)
    mask = read_mask_png(mask_path) if mask_path is not None else img.validity
    if mask.shape != img.shape or cam.image_size != img.shape:
        raise PipelineError("mask, depth and camera sizes disagree", EXIT_FORMAT)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = depth_path.stem
    wire_path, ply_path = out / f"{stem}_fit.json", out / f"{stem}_cloud.ply"
    mask = mask & img.validity
    if not mask.any():
        log.warning("empty sketch mask in %s; writing empty outputs", depth_path)
        wire_path.write_text(json.dumps({"vertices": [], "edges": []}) + "\n", encoding="utf-8")
        cloud = backproject(mask, np.zeros(mask.shape), cam, img.config)
        ply_path.write_text(write_ply(cloud), encoding="utf-8")
        return FitOutcome(wire_path, ply_path, 0, 0, ())
    y = np.where(mask, img.values, 0.0)
    cloud = backproject(mask, y, cam, img.config)
    fitted = fit_wireframe(extract_topology(mask), cloud, **fit_kw)
    if fitted.graph is None:
        wire_path.write_text(json.dumps({"vertices": [], "edges": []}) + "\n", encoding="utf-8")
    else:
        wire_path.write_text(dump_wireframe(fitted.graph), encoding="utf-8")
    ply_path.write_text(write_ply(cloud), encoding="utf-8")
    return FitOutcome(wire_path, ply_path, len(cloud), fitted.n_edges, fitted.residuals)
