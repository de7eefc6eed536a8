"""Sketch difficulty statistics: accidental pixel ratio and curve complexity."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .render import RenderBundle
from .wireframe import EdgeKind, WireframeGraph

log = logging.getLogger(__name__)

LINE_COST = 1
CURVE_COST = 3
# ~2 px of depth at 256^2 expressed in normalized disparity
DEFAULT_OCCLUSION_GAP = 0.01


@dataclass(frozen=True)
class ComplexityReport:
    apr: float
    curve_complexity: int
    foreground: int
    accidental: int
    lines: int
    curves: int
    shape_id: str = ""
    view_id: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def accidental_mask(bundle: RenderBundle, occlusion_gap: float = DEFAULT_OCCLUSION_GAP) -> np.ndarray:
    """Pixels where strokes from different edges overlap at different depth layers.

    Two edges sharing a vertex do not count within one stroke radius of that
    vertex's projection.
    """
    H, W = bundle.shape
    out = np.zeros(H * W, dtype=bool)
    pix = bundle.cover_pixel
    if len(pix) == 0:
        return out.reshape(H, W)
    edges = bundle.cover_edge
    disp = bundle.cover_disparity()
    starts = np.flatnonzero(np.r_[True, np.diff(pix) != 0])
    counts = np.diff(np.r_[starts, len(pix)])
    several = counts >= 2
    ends = bundle.edge_endpoints
    r = bundle.stroke_radius
    for s, c in zip(starts[several], counts[several]):
        p = int(pix[s])
        e_slice = edges[s : s + c]
        d_slice = disp[s : s + c]
        if d_slice.max() - d_slice.min() <= occlusion_gap:
            continue
        row, col = divmod(p, W)
        found = False
        for i in range(len(e_slice)):
            for j in range(i + 1, len(e_slice)):
                if abs(d_slice[i] - d_slice[j]) <= occlusion_gap:
                    continue
                shared = set(ends[e_slice[i]].tolist()) & set(ends[e_slice[j]].tolist())
                near_joint = False
                for v in shared:
                    vc, vr = bundle.vertex_px[v]
                    if (col - vc) ** 2 + (row - vr) ** 2 <= r * r:
                        near_joint = True
                        break
                if not near_joint:
                    found = True
                    break
            if found:
                break
        out[p] = found
    return out.reshape(H, W)


def accidental_pixel_ratio(bundle: RenderBundle, occlusion_gap: float = DEFAULT_OCCLUSION_GAP) -> float:
    fg = int(bundle.mask.sum())
    if fg == 0:
        log.warning("empty sketch mask; APR defined as 0")
        return 0.0
    return float(accidental_mask(bundle, occlusion_gap).sum()) / fg


def curve_complexity(g: WireframeGraph) -> int:
    """One point per line edge, three per non-line edge."""
    return sum(LINE_COST if e.kind is EdgeKind.LINE else CURVE_COST for e in g.edges)


def complexity_report(
    bundle: RenderBundle, g: WireframeGraph, occlusion_gap: float = DEFAULT_OCCLUSION_GAP
) -> ComplexityReport:
    acc = accidental_mask(bundle, occlusion_gap)
    fg = int(bundle.mask.sum())
    lines = sum(1 for e in g.edges if e.kind is EdgeKind.LINE)
    curves = len(g.edges) - lines
    return ComplexityReport(
        apr=float(acc.sum()) / fg if fg else 0.0,
        curve_complexity=curve_complexity(g),
        foreground=fg,
        accidental=int(acc.sum()),
        lines=lines,
        curves=curves,
        shape_id=bundle.provenance.shape_id,
        view_id=bundle.provenance.view_id,
    )


@dataclass(frozen=True)
class BinSummary:
    lower: float
    upper: float
    count: int
    mean_apr: float
    mean_complexity: float
    mean_value: float | None = None


def stratify(
    reports: list[ComplexityReport],
    bounds: list[float],
    key: str = "curve_complexity",
    values: list[float] | None = None,
) -> list[BinSummary]:
    """Bin reports on ``key`` into ``[b_i, b_{i+1})`` with the last bin open-ended.

    ``values`` (one per report, e.g. NMAE) are averaged per bin when given.
    Reports below the first bound are left out.
    """
    if not reports:
        raise ValueError("no reports to stratify")
    if list(bounds) != sorted(bounds) or len(set(bounds)) != len(bounds):
        raise ValueError("bin bounds must be strictly increasing")
    if values is not None and len(values) != len(reports):
        raise ValueError("values must align with reports")
    keyed = np.array([getattr(r, key) for r in reports], dtype=float)
    apr = np.array([r.apr for r in reports])
    cc = np.array([r.curve_complexity for r in reports], dtype=float)
    vals = None if values is None else np.asarray(values, dtype=float)
    edges = list(bounds) + [np.inf]
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (keyed >= lo) & (keyed < hi)
        n = int(sel.sum())
        out.append(
            BinSummary(
                float(lo),
                float(hi),
                n,
                float(apr[sel].mean()) if n else float("nan"),
                float(cc[sel].mean()) if n else float("nan"),
                None if vals is None else (float(vals[sel].mean()) if n else float("nan")),
            )
        )
    return out
