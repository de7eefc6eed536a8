"""Z-buffered rasterization of wireframe strokes into mask / depth / disparity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import OrthoCamera
from .depth import DisparityConfig, depth_to_disparity_values
from .wireframe import WireframeGraph

DEFAULT_STROKE_RADIUS = 1.5


class EmptyRenderError(ValueError):
    """No stroke pixel landed inside the image."""


@dataclass(frozen=True)
class Provenance:
    shape_id: str = ""
    view_id: int = 0
    seed: int = 0


@dataclass(frozen=True)
class RenderBundle:
    mask: np.ndarray  # (H, W) bool
    depth: np.ndarray  # (H, W) camera-space depth, NaN off-stroke
    disparity: np.ndarray  # (H, W) in [0, 1], NaN off-stroke
    cover_pixel: np.ndarray  # flat pixel index per hit, sorted
    cover_edge: np.ndarray  # edge id per hit
    cover_depth: np.ndarray  # depth per hit
    camera: OrthoCamera
    config: DisparityConfig
    stroke_radius: float
    edge_endpoints: np.ndarray  # (E, 2) vertex ids
    vertex_px: np.ndarray  # (V, 2) projected (col, row)
    provenance: Provenance = field(default_factory=Provenance)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def cover_list(self, row: int, col: int) -> list[tuple[int, float]]:
        idx = row * self.mask.shape[1] + col
        lo, hi = np.searchsorted(self.cover_pixel, [idx, idx + 1])
        return [(int(e), float(z)) for e, z in zip(self.cover_edge[lo:hi], self.cover_depth[lo:hi])]

    def cover_disparity(self) -> np.ndarray:
        return depth_to_disparity_values(self.cover_depth, self.config)

    def edge_pixel_sets(self) -> dict[int, np.ndarray]:
        """Flat pixel indices covered by each edge (edges with no pixels map to empty arrays)."""
        out = {int(e): np.empty(0, dtype=np.int64) for e in range(len(self.edge_endpoints))}
        order = np.argsort(self.cover_edge, kind="stable")
        edges = self.cover_edge[order]
        pix = self.cover_pixel[order]
        bounds = np.flatnonzero(np.diff(edges)) + 1
        for chunk_e, chunk_p in zip(np.split(edges, bounds), np.split(pix, bounds)):
            if len(chunk_e):
                out[int(chunk_e[0])] = chunk_p
        return out


def _segment_hits(ax, ay, az, bx, by, bz, px, py):
    """Squared pixel distance to a projected segment and the depth at the nearest point.

    Plain elementwise float64 arithmetic, so a per-pixel evaluation elsewhere
    rounds the same way.
    """
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    if l2 > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / l2
        t = np.clip(t, 0.0, 1.0)
    else:
        t = np.zeros(np.broadcast(px, py).shape)
    cx = ax + t * dx
    cy = ay + t * dy
    ex = px - cx
    ey = py - cy
    return ex * ex + ey * ey, az + t * (bz - az)


def rasterize(
    g: WireframeGraph,
    cam: OrthoCamera,
    stroke_radius: float = DEFAULT_STROKE_RADIUS,
    config: DisparityConfig | None = None,
    provenance: Provenance | None = None,
) -> RenderBundle:
    """Draw every edge with a round pen and keep the nearest depth per pixel.

    Within one edge, a pixel takes the depth of the closest polyline point
    (ties go to the smaller depth); across edges the minimum depth wins.
    """
    if stroke_radius < 0.5:
        raise ValueError("stroke radius must be >= 0.5 px")
    config = config or DisparityConfig()
    H, W = cam.image_size
    r = float(stroke_radius)
    r2 = r * r
    pix_chunks, edge_chunks, depth_chunks = [], [], []
    for edge in g.edges:
        col, row, dep = cam.project(edge.samples)
        c0 = max(int(math.floor(col.min() - r)), 0)
        c1 = min(int(math.ceil(col.max() + r)), W - 1)
        r0 = max(int(math.floor(row.min() - r)), 0)
        r1 = min(int(math.ceil(row.max() + r)), H - 1)
        if c0 > c1 or r0 > r1:
            continue
        py = np.arange(r0, r1 + 1, dtype=float)[:, None]
        px = np.arange(c0, c1 + 1, dtype=float)[None, :]
        best_d2 = np.full((r1 - r0 + 1, c1 - c0 + 1), np.inf)
        best_z = np.full_like(best_d2, np.inf)
        for k in range(len(col) - 1):
            ax, ay, az = col[k], row[k], dep[k]
            bx, by, bz = col[k + 1], row[k + 1], dep[k + 1]
            sc0 = max(int(math.floor(min(ax, bx) - r)), c0)
            sc1 = min(int(math.ceil(max(ax, bx) + r)), c1)
            sr0 = max(int(math.floor(min(ay, by) - r)), r0)
            sr1 = min(int(math.ceil(max(ay, by) + r)), r1)
            if sc0 > sc1 or sr0 > sr1:
                continue
            sub = (slice(sr0 - r0, sr1 - r0 + 1), slice(sc0 - c0, sc1 - c0 + 1))
            d2, z = _segment_hits(ax, ay, az, bx, by, bz, px[:, sub[1]], py[sub[0], :])
            bd = best_d2[sub]
            bz_ = best_z[sub]
            better = (d2 < bd) | ((d2 == bd) & (z < bz_))
            bd[better] = d2[better]
            bz_[better] = z[better]
        hit = best_d2 <= r2
        if not hit.any():
            continue
        rows, cols = np.nonzero(hit)
        pix_chunks.append((rows + r0) * W + (cols + c0))
        edge_chunks.append(np.full(len(rows), edge.id, dtype=np.int64))
        depth_chunks.append(best_z[hit])
    if not pix_chunks:
        raise EmptyRenderError("no geometry inside the camera frame")
    pix = np.concatenate(pix_chunks).astype(np.int64)
    edges = np.concatenate(edge_chunks)
    depths = np.concatenate(depth_chunks)
    order = np.lexsort((edges, pix))
    pix, edges, depths = pix[order], edges[order], depths[order]

    lo, hi = depths.min(), depths.max()
    # a unit-sphere vertex straight down the view sits on the near plane up to rounding
    slack = 1e-9 * (config.z_far - config.z_near)
    if lo < config.z_near - slack or hi > config.z_far + slack:
        raise ValueError(
            f"rendered depth range [{lo:.4f}, {hi:.4f}] leaves [{config.z_near}, {config.z_far}];"
            " normalize the graph and check the camera distance"
        )
    depths = np.clip(depths, config.z_near, config.z_far)

    flat = np.full(H * W, np.inf)
    np.minimum.at(flat, pix, depths)
    mask = np.isfinite(flat).reshape(H, W)
    depth = np.where(mask, flat.reshape(H, W), np.nan)
    disparity = np.full((H, W), np.nan)
    disparity[mask] = np.clip(depth_to_disparity_values(depth[mask], config), 0.0, 1.0)
    vcol, vrow, _ = cam.project(g.positions)
    return RenderBundle(
        mask=mask,
        depth=depth,
        disparity=disparity,
        cover_pixel=pix,
        cover_edge=edges,
        cover_depth=depths,
        camera=cam,
        config=config,
        stroke_radius=r,
        edge_endpoints=np.array([e.endpoints for e in g.edges], dtype=np.int64).reshape(-1, 2),
        vertex_px=np.stack([vcol, vrow], axis=1),
        provenance=provenance or Provenance(),
    )
