"""Fixture shapes and independent oracles shared by the tests."""

from __future__ import annotations

import math

import numpy as np

from wiredepth.wireframe import EdgeKind, circle_samples, make_graph, unit_cube


def line_graph(points, pairs):
    return make_graph(points, [((a, b), EdgeKind.LINE, None) for a, b in pairs])


def prism():
    t = np.linspace(0, 2 * np.pi, 4)[:-1]
    pts = [(math.cos(a), math.sin(a), z) for z in (-0.6, 0.6) for a in t]
    pairs = [(i, (i + 1) % 3) for i in range(3)] + [(3 + i, 3 + (i + 1) % 3) for i in range(3)]
    return line_graph(pts, pairs + [(i, i + 3) for i in range(3)])


def lshape():
    base = [(0, 0, 0), (2, 0, 0), (2, 1, 0), (1, 1, 0), (1, 2, 0), (0, 2, 0)]
    pts = base + [(x, y, 1) for x, y, _ in base]
    pairs = [(i, (i + 1) % 6) for i in range(6)] + [(6 + i, 6 + (i + 1) % 6) for i in range(6)]
    return line_graph(pts, pairs + [(i, i + 6) for i in range(6)])


def tetrahedron():
    pts = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    return line_graph(pts, [(i, j) for i in range(4) for j in range(i + 1, 4)])


def house():
    pts = [(x, y, z) for z in (0, 1) for x, y in ((0, 0), (1, 0), (1, 1), (0, 1))] + [(0.5, 0, 1.6), (0.5, 1, 1.6)]
    pairs = [(i, (i + 1) % 4) for i in range(4)] + [(4 + i, 4 + (i + 1) % 4) for i in range(4)]
    pairs += [(i, i + 4) for i in range(4)] + [(4, 8), (5, 8), (7, 9), (6, 9), (8, 9)]
    return line_graph(pts, pairs)


def pyramid():
    pts = [(-1, -1, 0), (1, -1, 0), (1, 1, 0), (-1, 1, 0), (0, 0, 1.3)]
    return line_graph(pts, [(i, (i + 1) % 4) for i in range(4)] + [(i, 4) for i in range(4)])


def circle(n=32, radius=0.8):
    ring = circle_samples((0, 0, 0), radius, n)
    return make_graph([ring[0]], [((0, 0), EdgeKind.CURVE, ring)])


LINE_FIXTURES = {
    "cube": unit_cube,
    "prism": prism,
    "lshape": lshape,
    "tetrahedron": tetrahedron,
    "house": house,
    "pyramid": pyramid,
}


def random_graph(rng: np.random.Generator, n_edges: int, curve_every: int = 4):
    """Random edges between random points; every ``curve_every``-th edge is an arc."""
    n_v = max(2, n_edges // 2 + 2)
    pts = rng.uniform(-1, 1, size=(n_v, 3))
    records = []
    for i in range(n_edges):
        a, b = rng.choice(n_v, size=2, replace=False)
        if curve_every and i % curve_every == curve_every - 1:
            # bowed polyline through a displaced midpoint
            t = np.linspace(0, 1, 9)[:, None]
            bow = rng.normal(size=3) * 0.3
            samples = pts[a] + t * (pts[b] - pts[a]) + np.sin(np.pi * t) * bow
            samples[0], samples[-1] = pts[a], pts[b]
            records.append(((int(a), int(b)), EdgeKind.CURVE, samples))
        else:
            records.append(((int(a), int(b)), EdgeKind.LINE, None))
    return make_graph(pts, records)


def brute_force_render(g, cam, radius, z_band=(0.5, 2.5)):
    """Per-pixel round-pen test over every segment of every edge, no bounding boxes.

    Depths are clamped to the near/far band, which only moves values sitting
    on a plane by rounding. Returns (mask, depth with NaN off-stroke, per-pixel
    cover count).
    """
    H, W = cam.image_size
    rows, cols = np.mgrid[0:H, 0:W].astype(float)
    zbuf = np.full((H, W), np.inf)
    count = np.zeros((H, W), dtype=int)
    r2 = radius * radius
    for e in g.edges:
        c, r, d = cam.project(e.samples)
        best = np.full((H, W), np.inf)
        bz = np.full((H, W), np.inf)
        for k in range(len(c) - 1):
            dx, dy = c[k + 1] - c[k], r[k + 1] - r[k]
            l2 = dx * dx + dy * dy
            if l2 > 0.0:
                t = np.clip(((cols - c[k]) * dx + (rows - r[k]) * dy) / l2, 0.0, 1.0)
            else:
                t = np.zeros((H, W))
            ex = cols - (c[k] + t * dx)
            ey = rows - (r[k] + t * dy)
            d2 = ex * ex + ey * ey
            z = d[k] + t * (d[k + 1] - d[k])
            take = (d2 < best) | ((d2 == best) & (z < bz))
            best = np.where(take, d2, best)
            bz = np.where(take, z, bz)
        hit = best <= r2
        count += hit
        zbuf = np.where(hit, np.minimum(zbuf, np.clip(bz, *z_band)), zbuf)
    mask = np.isfinite(zbuf)
    return mask, np.where(mask, zbuf, np.nan), count


def brute_metrics(pred, gt, mask, eps=1e-6, min_gt=1e-4, thr=1.25):
    """Loop-based MAE / NMAE / AbsRel / delta over valid pixels."""
    p = [float(a) for a, m in zip(np.ravel(pred), np.ravel(mask)) if m]
    y = [float(a) for a, m in zip(np.ravel(gt), np.ravel(mask)) if m]
    n = len(y)
    abs_err = [abs(a - b) for a, b in zip(y, p)]
    mae = math.fsum(abs_err) / n
    nmae = mae / (max(y) - min(y) + eps)
    rel = [abs(a - b) / a for a, b in zip(y, p) if a >= min_gt]
    absrel = math.fsum(rel) / len(rel)
    hits = 0
    pos = 0
    for a, b in zip(y, p):
        if a <= 0:
            continue
        pos += 1
        if b > 0 and max(b / a, a / b) < thr:
            hits += 1
    return mae, nmae, absrel, hits / pos
