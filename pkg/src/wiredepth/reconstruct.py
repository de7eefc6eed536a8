"""Lift (mask, disparity) back to 3D and fit a line-segment wireframe."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from .camera import OrthoCamera
from .depth import DisparityConfig, disparity_to_depth_values
from .wireframe import EdgeKind, WireframeGraph, make_graph

log = logging.getLogger(__name__)

_NEIGHBOURS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) model units
    pixels: np.ndarray  # (N, 2) (row, col)
    camera: OrthoCamera | None = None

    def __len__(self) -> int:
        return len(self.points)

    def lookup(self) -> dict[tuple[int, int], int]:
        return {(int(r), int(c)): i for i, (r, c) in enumerate(self.pixels)}


def backproject(mask, disparity, cam: OrthoCamera, cfg: DisparityConfig) -> PointCloud:
    """One 3D point per stroke pixel: pixel centre on the image plane pushed to its depth."""
    mask = np.asarray(mask, dtype=bool)
    disparity = np.asarray(disparity, dtype=float)
    if mask.shape != tuple(cam.image_size) or disparity.shape != mask.shape:
        raise ValueError(
            f"image shape {mask.shape} / {disparity.shape} does not match camera {cam.image_size}"
        )
    rows, cols = np.nonzero(mask)
    y = disparity[rows, cols]
    if not np.isfinite(y).all() or (y < 0).any() or (y > 1).any():
        raise ValueError("disparity must be finite and within [0, 1] on masked pixels")
    z = disparity_to_depth_values(y, cfg)
    pts = cam.unproject(cols.astype(float), rows.astype(float), z).reshape(-1, 3)
    return PointCloud(pts, np.stack([rows, cols], axis=1).reshape(-1, 2), cam)


# --- 2D topology -------------------------------------------------------------


@dataclass
class SkeletonNode:
    id: int
    pixels: list[tuple[int, int]]
    synthetic: bool = False

    @property
    def centroid(self) -> tuple[float, float]:
        arr = np.asarray(self.pixels, dtype=float)
        return float(arr[:, 0].mean()), float(arr[:, 1].mean())


@dataclass
class SkeletonPath:
    id: int
    nodes: tuple[int, int]
    pixels: list[tuple[int, int]]  # ordered from nodes[0] to nodes[1], node pixels excluded
    closed: bool = False


@dataclass
class SkeletonGraph:
    nodes: list[SkeletonNode] = field(default_factory=list)
    paths: list[SkeletonPath] = field(default_factory=list)
    skeleton: np.ndarray | None = None

    def degree(self, node_id: int) -> int:
        return sum((p.nodes[0] == node_id) + (p.nodes[1] == node_id) for p in self.paths)


def _neighbours(skel: np.ndarray, r: int, c: int):
    H, W = skel.shape
    for dr, dc in _NEIGHBOURS:
        rr, cc = r + dr, c + dc
        if 0 <= rr < H and 0 <= cc < W and skel[rr, cc]:
            yield rr, cc


def extract_topology(mask) -> SkeletonGraph:
    """Thin the mask to a 1-px skeleton and split it into nodes and pixel paths.

    Nodes are connected clusters of skeleton pixels whose neighbour count is
    not 2; a closed loop with no such pixel gets one synthetic node at its
    first pixel in raster order.
    """
    mask = np.asarray(mask, dtype=bool)
    skel = skeletonize(mask) if mask.any() else np.zeros_like(mask)
    graph = SkeletonGraph(skeleton=skel)
    if not skel.any():
        return graph
    counts = ndimage.convolve(skel.astype(np.int32), np.ones((3, 3), np.int32), mode="constant") - skel
    is_node = skel & (counts != 2)
    labels, n = ndimage.label(is_node, structure=np.ones((3, 3)))
    owner = np.full(skel.shape, -1, dtype=np.int64)
    for lab in range(1, n + 1):
        pix = [tuple(map(int, p)) for p in np.argwhere(labels == lab)]
        graph.nodes.append(SkeletonNode(lab - 1, pix))
        for p in pix:
            owner[p] = lab - 1
    visited = np.zeros_like(skel)

    def walk(start_node: int, first: tuple[int, int], prev: tuple[int, int]):
        path = [first]
        visited[first] = True
        cur = first
        while True:
            others = [q for q in _neighbours(skel, *cur) if q != prev]
            hit = sorted({int(owner[q]) for q in others if owner[q] >= 0})
            if hit:
                ends = [h for h in hit if h != start_node] or hit
                return path, ends[0]
            fresh = [q for q in others if not visited[q]]
            if not fresh:
                return path, start_node
            prev, cur = cur, fresh[0]
            visited[cur] = True
            path.append(cur)

    for node in graph.nodes:
        for p in node.pixels:
            for q in _neighbours(skel, *p):
                if owner[q] >= 0 or visited[q]:
                    continue
                pix, end = walk(node.id, q, p)
                graph.paths.append(SkeletonPath(len(graph.paths), (node.id, end), pix))

    rest = skel & ~visited & (owner < 0)
    while rest.any():
        start = tuple(map(int, np.argwhere(rest)[0]))
        nid = len(graph.nodes)
        graph.nodes.append(SkeletonNode(nid, [start], synthetic=True))
        owner[start] = nid
        visited[start] = True
        loop_pix = []
        for q in _neighbours(skel, *start):
            if not visited[q]:
                loop_pix, _ = walk(nid, q, start)
                break
        graph.paths.append(SkeletonPath(len(graph.paths), (nid, nid), loop_pix, closed=True))
        rest = skel & ~visited & (owner < 0)
    return graph


# --- 3D fitting --------------------------------------------------------------


@dataclass(frozen=True)
class FittedWireframe:
    graph: WireframeGraph | None
    residuals: tuple[float, ...]
    support: tuple[int, ...] = ()  # supporting point count per edge

    @property
    def n_edges(self) -> int:
        return 0 if self.graph is None else len(self.graph.edges)


def tls_line(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Principal axis through the centroid: (centroid, unit direction, RMS perpendicular distance)."""
    c = points.mean(axis=0)
    rel = points - c
    if len(points) < 2 or not np.any(rel):
        return c, np.array([1.0, 0.0, 0.0]), 0.0
    _, _, vt = np.linalg.svd(rel, full_matrices=False)
    d = vt[0]
    perp = rel - np.outer(rel @ d, d)
    return c, d, float(np.sqrt((perp**2).sum(axis=1).mean()))


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    l2 = float(ab @ ab)
    if l2 == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / l2, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def _split_fit(points: np.ndarray, tol: float, min_points: int = 3) -> list[tuple[int, int]]:
    """Index ranges [i, j] (inclusive) of pieces whose TLS residual is within ``tol``."""
    pieces = []
    stack = [(0, len(points) - 1)]
    while stack:
        i, j = stack.pop()
        seg = points[i : j + 1]
        _, _, res = tls_line(seg)
        if res <= tol or j - i + 1 < 2 * min_points:
            pieces.append((i, j))
            continue
        # split where the chord deviates most
        dev = point_segment_distance(seg, seg[0], seg[-1])
        k = int(np.argmax(dev[1:-1])) + 1 if len(seg) > 2 else 1
        k = min(max(k, min_points - 1), len(seg) - min_points)
        stack.append((i + k, j))
        stack.append((i, i + k))
    return sorted(pieces)


def _closest_on_line_to_pixel(c: np.ndarray, d: np.ndarray, cam: OrthoCamera, target_rc) -> np.ndarray | None:
    """Point on the 3D line c + s d whose projection is nearest to a (row, col) location."""
    col0, row0, _ = cam.project(c[None])
    col1, row1, _ = cam.project((c + d)[None])
    v = np.array([col1[0] - col0[0], row1[0] - row0[0]])
    vv = float(v @ v)
    if vv < 1e-12:
        return None
    w = np.array([target_rc[1] - col0[0], target_rc[0] - row0[0]])
    return c + float(w @ v) / vv * d


@dataclass(eq=False)
class _Piece:
    path: int
    points: np.ndarray
    center: np.ndarray
    direction: np.ndarray
    ends: list  # two 3D endpoint estimates
    end_keys: list  # vertex key per end


def _line_distance(p: "_Piece", q: "_Piece") -> float:
    """Closest approach of the two infinite fitted lines."""
    w = q.center - p.center
    n = np.cross(p.direction, q.direction)
    nn = float(np.linalg.norm(n))
    if nn < 1e-6:
        return float(np.linalg.norm(np.cross(w, p.direction)))
    return abs(float(w @ n)) / nn


def _meeting_point(lines: list) -> np.ndarray | None:
    """Least-squares point nearest to all lines, weighted by support.

    None when the lines are (nearly) parallel.
    """
    if len(lines) < 2:
        return None
    A = np.zeros((3, 3))
    rhs = np.zeros(3)
    total = 0
    for pc in lines:
        proj = (np.eye(3) - np.outer(pc.direction, pc.direction)) * len(pc.points)
        A += proj
        rhs += proj @ pc.center
        total += len(pc.points)
    w = np.linalg.eigvalsh(A / total)
    if w[0] < 1e-2:
        return None
    return np.linalg.solve(A, rhs)


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, a):
        self.parent.setdefault(a, a)
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def fit_wireframe(
    topology: SkeletonGraph,
    cloud: PointCloud,
    split_tol: float = 1.0,
    trim_px: int = 3,
    spur_px: int = 4,
    merge_tol: float = 4.0,
    collinear_deg: float = 8.0,
    bad_fit: float = 4.0,
) -> FittedWireframe:
    """Fit 3D line segments to the skeleton paths, splitting paths that are not straight.

    Tolerances are in pixel footprints (``split_tol``, ``merge_tol``) or pixels
    (``trim_px``, ``spur_px``). Points within ``trim_px`` of a junction are
    left out of the fit since overlapping strokes corrupt their depth.
    Segments whose residual exceeds ``bad_fit * split_tol`` footprints are
    dropped, as are short dangling segments.
    """
    cam = cloud.camera
    if cam is None:
        raise ValueError("point cloud carries no camera")
    if not topology.paths or len(cloud) == 0:
        return FittedWireframe(None, ())
    fp = cam.footprint
    index = cloud.lookup()
    nodes = {n.id: n for n in topology.nodes}
    stroke = np.zeros(cam.image_size, bool)
    stroke[cloud.pixels[:, 0], cloud.pixels[:, 1]] = True
    stroke_dist = ndimage.distance_transform_edt(~stroke)

    # collapse short links between junction clusters and drop short spurs
    uf = _UnionFind()
    degree = {n.id: topology.degree(n.id) for n in topology.nodes}
    keep_paths = []
    for p in topology.paths:
        a, b = p.nodes
        if p.closed or a == b:
            keep_paths.append(p)
            continue
        short = len(p.pixels) <= spur_px
        if short and degree[a] >= 3 and degree[b] >= 3:
            uf.union(a, b)
            continue
        if short and min(degree[a], degree[b]) == 1 and max(degree[a], degree[b]) >= 3:
            continue
        keep_paths.append(p)
    cluster_pixels: dict[int, list] = {}
    for n in topology.nodes:
        cluster_pixels.setdefault(uf.find(n.id), []).extend(n.pixels)
    cluster_center = {k: tuple(np.mean(np.asarray(v, float), axis=0)) for k, v in cluster_pixels.items()}
    cluster_degree: dict[int, int] = {}
    for p in keep_paths:
        for nid in p.nodes:
            cluster_degree[uf.find(nid)] = cluster_degree.get(uf.find(nid), 0) + 1

    pieces: list[_Piece] = []
    ends_at: dict = {}
    for p in keep_paths:
        ca, cb = uf.find(p.nodes[0]), uf.find(p.nodes[1])
        pix = list(p.pixels)
        if p.closed:
            pix = list(nodes[p.nodes[0]].pixels) + pix
        lo = trim_px if cluster_degree.get(ca, 0) >= 3 else 0
        hi = trim_px if cluster_degree.get(cb, 0) >= 3 else 0
        if len(pix) - lo - hi >= max(2, (lo + hi) // 2):
            pix = pix[lo : len(pix) - hi]
        pts = np.array([cloud.points[index[q]] for q in pix if q in index]).reshape(-1, 3)
        if len(pts) < 2:
            log.warning("dropping skeleton path %d: %d supporting point(s)", p.id, len(pts))
            continue
        ranges = _split_fit(pts, split_tol * fp)
        path_pieces = []
        for i, j in ranges:
            seg = pts[i : j + 1]
            c, d, _ = tls_line(seg)
            s = (seg - c) @ d
            ends = [c + s[0] * d, c + s[-1] * d]
            path_pieces.append(_Piece(p.id, seg, c, d, ends, [None, None]))
        for k in range(len(path_pieces) - 1):
            key = ("split", p.id, k)
            path_pieces[k].end_keys[1] = key
            path_pieces[k + 1].end_keys[0] = key
        for offset, slot, cl in ((0, 0, ca), (len(path_pieces) - 1, 1, cb)):
            piece = path_pieces[offset]
            est = _closest_on_line_to_pixel(piece.center, piece.direction, cam, cluster_center[cl])
            if est is not None:
                piece.ends[slot] = est
            piece.end_keys[slot] = ("node", cl)
            ends_at.setdefault(cl, []).append((len(pieces) + offset, slot))
        pieces.extend(path_pieces)

    # at each 2D node, group incident ends into 3D vertices. Ends are grouped by how
    # close their fitted lines pass to each other, not by endpoint estimates: on a
    # foreshortened edge a pixel of 2D error moves the estimate several footprints
    # in depth, while the lines themselves still meet.
    vertex_of: dict = {}
    vertices: list[list[np.ndarray]] = []
    anchored: list[bool] = []  # position backed by a meeting point of several lines
    for cl, incident in sorted(ends_at.items()):
        groups: list[list] = []
        for pi, slot in incident:
            for grp in groups:
                if all(
                    _line_distance(pieces[pi], pieces[g[0]]) <= merge_tol * fp
                    for g in grp
                ):
                    grp.append((pi, slot))
                    break
            else:
                groups.append([(pi, slot)])
        for grp in groups:
            lines = [pieces[g[0]] for g in grp]
            meet = _meeting_point(lines)
            trusted = list(lines)
            while meet is not None:
                # accept only a true meeting point on a drawn stroke; it may sit away
                # from the node when strokes run together before they separate
                offs = [float(np.linalg.norm(np.cross(meet - pc.center, pc.direction))) for pc in trusted]
                if max(offs) <= merge_tol * fp:
                    col, row, _ = cam.project(meet[None])
                    ri, ci = int(round(row[0])), int(round(col[0]))
                    inside = 0 <= ri < stroke.shape[0] and 0 <= ci < stroke.shape[1]
                    if not inside or stroke_dist[ri, ci] > 1.0:
                        meet = None
                    break
                # a stub line that misses the others is left out and the rest retried
                trusted.pop(int(np.argmax(offs)))
                meet = _meeting_point(trusted)
            if meet is not None:
                for g in grp:
                    pc = pieces[g[0]]
                    pc.ends[g[1]] = pc.center + float((meet - pc.center) @ pc.direction) * pc.direction
            vid = len(vertices)
            if meet is not None:
                vertices.append([pieces[g[0]].ends[g[1]] for g in grp if pieces[g[0]] in trusted])
            else:
                vertices.append([pieces[g[0]].ends[g[1]] for g in grp])
            anchored.append(meet is not None)
            for g in grp:
                vertex_of[(g[0], g[1])] = vid
    split_vertex: dict = {}
    for pi, piece in enumerate(pieces):
        for slot in (0, 1):
            key = piece.end_keys[slot]
            if key[0] == "split":
                if key not in split_vertex:
                    split_vertex[key] = len(vertices)
                    vertices.append([])
                    anchored.append(False)
                vid = split_vertex[key]
                vertices[vid].append(piece.ends[slot])
                vertex_of[(pi, slot)] = vid
    positions = [np.mean(v, axis=0) for v in vertices]

    # vertices found from different nodes can coincide in 3D (a corner reached through a
    # merged stroke); fuse them
    fuse = _UnionFind()
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            if np.linalg.norm(positions[i] - positions[j]) <= merge_tol * fp:
                fuse.union(i, j)
    if any(fuse.find(i) != i for i in range(len(positions))):
        members: dict[int, list[int]] = {}
        for i in range(len(vertices)):
            members.setdefault(fuse.find(i), []).append(i)
        fused = {}
        for root, ids in members.items():
            best = [i for i in ids if anchored[i]] or ids
            fused[root] = np.mean([positions[i] for i in best], axis=0)
        positions = [fused[fuse.find(i)] for i in range(len(positions))]
        vertex_of = {key: fuse.find(v) for key, v in vertex_of.items()}

    # segments as (vertex a, vertex b, supporting points); then dissolve pass-through vertices
    segs = {}
    by_pair: dict = {}
    for pi, piece in enumerate(pieces):
        a, b = vertex_of[(pi, 0)], vertex_of[(pi, 1)]
        if a == b:
            continue  # collapsed onto one vertex
        pair = (min(a, b), max(a, b))
        if a != b and pair in by_pair:
            prev = segs[by_pair[pair]]
            prev[2] = np.concatenate([prev[2], piece.points])
            continue
        by_pair[pair] = pi
        segs[pi] = [a, b, piece.points, piece.direction]
    # a link between the two halves of a split crossing joins strokes at different depths:
    # almost no image length but a long way in depth. No drawn edge looks like that.
    # Each end then carries the two halves of one line, so both have degree 3.
    seg_degree: dict[int, int] = {}
    for a, b, _, _ in segs.values():
        seg_degree[a] = seg_degree.get(a, 0) + 1
        seg_degree[b] = seg_degree.get(b, 0) + 1
    for sid, (a, b, _, _) in list(segs.items()):
        if seg_degree[a] != 3 or seg_degree[b] != 3:
            continue
        col, row, _ = cam.project(np.stack([positions[a], positions[b]]))
        px_len = math.hypot(col[1] - col[0], row[1] - row[0])
        if px_len < spur_px and np.linalg.norm(positions[a] - positions[b]) > merge_tol * fp:
            log.debug("dropping depth-jump link %d-%d (%.1f px)", a, b, px_len)
            del segs[sid]
    # split points that only chop off a stub (a few mixed-depth pixels where strokes merge)
    anchored_root = {}
    for i, a in enumerate(anchored):
        anchored_root[fuse.find(i)] = anchored_root.get(fuse.find(i), False) or a
    stub_vertices = {fuse.find(v) for v in split_vertex.values()} - {
        v for v, a in anchored_root.items() if a
    }
    stub_pts = 2 * (trim_px + spur_px)
    cos_tol = math.cos(math.radians(collinear_deg))
    changed = True
    while changed:
        changed = False
        incident_segs: dict[int, list[int]] = {}
        for sid, (a, b, _, _) in segs.items():
            incident_segs.setdefault(a, []).append(sid)
            if b != a:
                incident_segs.setdefault(b, []).append(sid)
        # degree-2 vertices between collinear segments (crossings, over-split paths) or stubs
        for vid in sorted(incident_segs):
            sids = incident_segs.get(vid, [])
            if len(sids) != 2 or sids[0] == sids[1]:
                continue
            s1, s2 = segs[sids[0]], segs[sids[1]]
            o1 = s1[1] if s1[0] == vid else s1[0]
            o2 = s2[1] if s2[0] == vid else s2[0]
            if o1 == o2:
                continue
            merged_pts = np.concatenate([s1[2], s2[2]])
            c, d, _ = tls_line(merged_pts)
            rel = merged_pts - c
            worst = float(np.percentile(np.linalg.norm(rel - np.outer(rel @ d, d), axis=1), 90))
            short = min(len(s1[2]), len(s2[2])) < stub_pts
            # a few points give a poor direction, so short pieces are judged by the joint fit alone
            straight = worst <= 2 * split_tol * fp and (short or abs(float(s1[3] @ s2[3])) >= cos_tol)
            if not (straight or (short and vid in stub_vertices)):
                continue
            segs[sids[0]] = [o1, o2, merged_pts, d]
            del segs[sids[1]]
            stub_vertices.discard(vid)
            changed = True
            break

    # final segments: one per vertex pair, residual = RMS distance of support to the segment
    final: dict = {}
    for a, b, pts, _ in segs.values():
        if a == b or np.linalg.norm(positions[a] - positions[b]) <= 1e-6:
            continue
        key = (min(a, b), max(a, b))
        final[key] = np.concatenate([final[key], pts]) if key in final else pts
    fitted = {}
    for (a, b), pts in final.items():
        dist = point_segment_distance(pts, positions[a], positions[b])
        res = float(np.sqrt((dist**2).mean()))
        if res > bad_fit * split_tol * fp:
            log.warning("dropping fitted segment %d-%d: residual %.3g footprints", a, b, res / fp)
            continue
        fitted[(a, b)] = (pts, res)
    spur_len = stub_pts * fp
    # rejoin an edge whose middle was lost at a crossing: two dangling ends that continue
    # each other in 3D
    joined = True
    while joined:
        joined = False
        deg = {}
        for a, b in fitted:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        dangling = []
        for key in fitted:
            for v, x in (key, key[::-1]):
                if deg[v] == 1 and deg[x] > 1:
                    dangling.append((v, x, key))
        options = []
        for i in range(len(dangling)):
            for j in range(i + 1, len(dangling)):
                (v1, x1, k1), (v2, x2, k2) = dangling[i], dangling[j]
                gap = positions[v2] - positions[v1]
                dist = float(np.linalg.norm(gap))
                if k1 == k2 or x1 == x2 or dist > 3 * spur_len:
                    continue
                u1 = positions[v1] - positions[x1]
                u2 = positions[x2] - positions[v2]
                u1 /= np.linalg.norm(u1)
                u2 /= np.linalg.norm(u2)
                if float(u1 @ u2) < cos_tol:
                    continue
                if dist > merge_tol * fp and float(gap @ u1) / dist < cos_tol:
                    continue
                options.append((dist, k1, k2, x1, x2))
        for dist, k1, k2, x1, x2 in sorted(options, key=lambda o: o[0]):
            pts = np.concatenate([fitted[k1][0], fitted[k2][0]])
            res = float(np.sqrt((point_segment_distance(pts, positions[x1], positions[x2]) ** 2).mean()))
            if res > bad_fit * split_tol * fp:
                continue
            del fitted[k1], fitted[k2]
            key = (min(x1, x2), max(x1, x2))
            if key in fitted:
                pts = np.concatenate([fitted[key][0], pts])
                res = float(np.sqrt((point_segment_distance(pts, positions[x1], positions[x2]) ** 2).mean()))
            fitted[key] = (pts, res)
            joined = True
            break
    # corners where strokes ran together end as separate dangling stubs
    while _close_corner(fitted, positions, cam, stroke_dist, 3 * stub_pts, merge_tol * fp, stub_pts):
        pass
    # prune short dangling segments left where strokes merge
    pruned = True
    while pruned:
        pruned = False
        deg: dict[int, int] = {}
        for a, b in fitted:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        for a, b in list(fitted):
            if min(deg[a], deg[b]) > 1:
                continue
            col, row, _ = cam.project(np.stack([positions[a], positions[b]]))
            # image length catches stubs that run along the view direction
            short = (
                np.linalg.norm(positions[a] - positions[b]) < spur_len
                or math.hypot(col[1] - col[0], row[1] - row[0]) < stub_pts
            )
            if (short and max(deg[a], deg[b]) > 1) or _redundant(fitted, (a, b), positions, 2 * split_tol * fp):
                del fitted[(a, b)]
                pruned = True
                break
    if not fitted:
        return FittedWireframe(None, ())
    used = sorted({v for key in fitted for v in key})
    remap = {v: i for i, v in enumerate(used)}
    records, residuals, support = [], [], []
    for (a, b), (pts, res) in fitted.items():
        records.append(((remap[a], remap[b]), EdgeKind.LINE, None))
        residuals.append(res)
        support.append(len(pts))
    out_pos = [positions[v] for v in used]
    return FittedWireframe(make_graph(out_pos, records), tuple(residuals), tuple(support))


def _segment_line(pts: np.ndarray, a: np.ndarray, b: np.ndarray, min_support: int) -> _Piece:
    """Line of a fitted segment; a thinly supported one is taken through its end vertices."""
    if len(pts) >= min_support:
        c, d, _ = tls_line(pts)
    else:
        c, d = (a + b) / 2.0, (b - a) / max(float(np.linalg.norm(b - a)), 1e-12)
    return _Piece(-1, pts, c, d, [], [])


def _on_strokes(p: np.ndarray, q: np.ndarray, cam: OrthoCamera, stroke_dist: np.ndarray) -> bool:
    """Whether the image segment between two 3D points stays on drawn pixels (one pixel of slack)."""
    col, row, _ = cam.project(np.stack([p, q]))
    n = int(math.ceil(math.hypot(col[1] - col[0], row[1] - row[0]))) + 1
    rs = np.rint(np.linspace(row[0], row[1], n)).astype(int)
    cs = np.rint(np.linspace(col[0], col[1], n)).astype(int)
    H, W = stroke_dist.shape
    if rs.min() < 0 or cs.min() < 0 or rs.max() >= H or cs.max() >= W:
        return False
    return bool((stroke_dist[rs, cs] <= 1.0).all())


def _close_corner(fitted: dict, positions: list, cam: OrthoCamera, stroke_dist: np.ndarray,
                  reach_px: float, tol: float, min_support: int) -> bool:
    """Join one dangling end to the vertex or dangling end its line runs into.

    The joined vertex moves to the meeting point of every line incident to
    either side. The join is refused unless those lines pass within ``tol``
    of that point (plus a tenth of the gap for the dangling one), and the bridge from the dangling end to it runs
    along drawn strokes for at most ``reach_px`` pixels. Returns whether a
    join was made.
    """
    deg: dict[int, int] = {}
    incident: dict[int, list] = {}
    for key in fitted:
        for v in key:
            deg[v] = deg.get(v, 0) + 1
            incident.setdefault(v, []).append(key)
    lines = {key: _segment_line(pts, positions[key[0]], positions[key[1]], min_support)
             for key, (pts, _) in fitted.items()}
    col, row, _ = cam.project(np.stack(positions))
    best = None
    for key in sorted(fitted):
        for v, x in (key, key[::-1]):
            if deg[v] != 1:
                continue
            for w in sorted(deg):
                if w in (v, x) or (min(w, x), max(w, x)) in fitted:
                    continue
                if math.hypot(col[w] - col[v], row[w] - row[v]) > reach_px:
                    continue
                group = [lines[key]] + [lines[k] for k in incident[w]]
                meet = _meeting_point(group)
                if meet is None:
                    continue
                offs = [float(np.linalg.norm(np.cross(meet - ln.center, ln.direction))) for ln in group]
                gap = float(np.linalg.norm(meet - positions[v]))
                # the dangling line is extrapolated across the gap, so its slack grows with it
                if offs[0] > tol + 0.1 * gap or max(offs[1:]) > tol:
                    continue
                if not _on_strokes(positions[v], meet, cam, stroke_dist):
                    continue
                if not _on_strokes(positions[w], meet, cam, stroke_dist):
                    continue
                if best is None or gap < best[0]:
                    best = (gap, key, v, x, w, meet)
    if best is None:
        return False
    _, key, v, x, w, meet = best
    positions[w] = meet
    pts, _ = fitted.pop(key)
    fitted[(min(w, x), max(w, x))] = (pts, 0.0)
    for k in [k for k in fitted if w in k]:
        a, b = k
        kpts = fitted[k][0]
        res = float(np.sqrt((point_segment_distance(kpts, positions[a], positions[b]) ** 2).mean()))
        fitted[k] = (kpts, res)
    return True

def _redundant(fitted: dict, key: tuple, positions: list, tol: float) -> bool:
    """Whether a segment's support already lies along another fitted segment."""
    pts = fitted[key][0]
    for other in fitted:
        if other == key:
            continue
        d = point_segment_distance(pts, positions[other[0]], positions[other[1]])
        if float(np.percentile(d, 90)) <= tol:
            return True
    return False


def _segment_point_distance_2d(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    l2 = float(ab @ ab)
    t = 0.0 if l2 == 0.0 else min(max(float((p - a) @ ab) / l2, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    c = abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(min(c, 1.0)))


def _segments_cross(a, b, c, d) -> bool:
    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    return orient(a, b, c) * orient(a, b, d) < 0 and orient(c, d, a) * orient(c, d, b) < 0


def in_general_position(
    g: WireframeGraph, cam: OrthoCamera, stroke_radius: float = 1.5, min_angle_deg: float = 15.0
) -> bool:
    """True when the line-only drawing of ``g`` has no accidental alignments.

    Every piece of a projected edge between junctions (its ends and its
    crossings with other edges) is longer than a few stroke widths, no vertex
    lands within two stroke widths of an edge it is not on, and edges that
    meet or cross in the image do so at ``min_angle_deg`` or more. Only then does the
    sketch's 2D topology match the graph.
    """
    col, row, _ = cam.project(g.positions)
    px = np.stack([col, row], axis=1)
    clear = 5.0 * stroke_radius
    segs = [(e.endpoints, px[e.endpoints[0]], px[e.endpoints[1]]) for e in g.edges]
    for (u, v), a, b in segs:
        if np.linalg.norm(b - a) < 2 * clear:
            return False
        for w in range(len(px)):
            if w not in (u, v) and _segment_point_distance_2d(px[w], a, b) < clear:
                return False
    stops: list[list[float]] = [[0.0, 1.0] for _ in segs]  # junction positions along each edge
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            (e1, a, b), (e2, c, d) = segs[i], segs[j]
            meets = set(e1) & set(e2)
            crosses = not meets and _segments_cross(a, b, c, d)
            if (meets or crosses) and _angle_deg(b - a, d - c) < min_angle_deg:
                return False
            if crosses:
                m = np.array([b - a, c - d]).T
                s, t = np.linalg.solve(m, c - a)
                stops[i].append(float(s))
                stops[j].append(float(t))
    # every piece of an edge between junctions (ends or crossings) needs room for a fit
    for (_, a, b), st in zip(segs, stops):
        gaps = np.diff(np.sort(st)) * float(np.linalg.norm(b - a))
        if gaps.min() < 2 * clear:
            return False
    return True


def symmetric_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    a = np.asarray(a, float).reshape(-1, 3)
    b = np.asarray(b, float).reshape(-1, 3)
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def write_ply(cloud: PointCloud) -> str:
    """ASCII PLY with the source pixel stored per vertex."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
        "property int row",
        "property int col",
        "end_header",
    ]
    for (x, y, z), (r, c) in zip(cloud.points, cloud.pixels):
        lines.append(f"{x:.9g} {y:.9g} {z:.9g} {int(r)} {int(c)}")
    return "\n".join(lines) + "\n"


def reconstruct(mask, disparity, cam: OrthoCamera, cfg: DisparityConfig, **fit_kw) -> tuple[PointCloud, SkeletonGraph, FittedWireframe]:
    cloud = backproject(mask, disparity, cam, cfg)
    topo = extract_topology(mask)
    return cloud, topo, fit_wireframe(topo, cloud, **fit_kw)
