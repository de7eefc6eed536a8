"""Wireframe domain model: vertices, typed polyline edges, interchange I/O."""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

# Vertex coincidence / collinearity tolerance in model units.
COINCIDENCE_TOL = 1e-6


class WireframeParseError(ValueError):
    """Input stream does not parse under the declared format."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.line = line
        self.offset = offset


class WireframeValidationError(ValueError):
    def __init__(self, message: str, edge_id: int | None = None):
        super().__init__(message)
        self.edge_id = edge_id


class EdgeKind(str, enum.Enum):
    LINE = "line"
    CURVE = "curve"


class WireFormat(str, enum.Enum):
    WIRE_JSON = "wirejson"
    OBJ_LINES = "obj"


@dataclass(frozen=True)
class Vertex:
    id: int
    position: np.ndarray


@dataclass(frozen=True)
class Edge:
    id: int
    endpoints: tuple[int, int]
    kind: EdgeKind
    samples: np.ndarray  # (n, 3), n >= 2

    @property
    def is_closed(self) -> bool:
        return self.endpoints[0] == self.endpoints[1]


@dataclass(frozen=True)
class WireframeGraph:
    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    center: np.ndarray = field(repr=False)
    radius: float

    @property
    def positions(self) -> np.ndarray:
        return np.array([v.position for v in self.vertices], dtype=float).reshape(-1, 3)

    def all_samples(self) -> np.ndarray:
        parts = [self.positions] + [e.samples for e in self.edges]
        return np.concatenate(parts, axis=0)

    def __len__(self) -> int:
        return len(self.edges)


def _bounding_sphere(points: np.ndarray) -> tuple[np.ndarray, float]:
    # Box-centred sphere: exact for boxes and cheap; not the minimal sphere.
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    center = (lo + hi) / 2.0
    radius = float(np.sqrt(((points - center) ** 2).sum(axis=1)).max())
    return center, radius


def _collinear(samples: np.ndarray, tol: float = COINCIDENCE_TOL) -> bool:
    a, b = samples[0], samples[-1]
    d = b - a
    n = np.linalg.norm(d)
    if n <= tol:
        return False
    d = d / n
    rel = samples - a
    perp = rel - np.outer(rel @ d, d)
    return bool(np.sqrt((perp**2).sum(axis=1)).max() <= tol)


def make_graph(
    positions: Iterable[Iterable[float]],
    edges: Iterable[tuple[tuple[int, int], EdgeKind | str, Iterable[Iterable[float]] | None]],
) -> WireframeGraph:
    """Build and validate a graph from raw vertex positions and edge records.

    Each edge record is ``((a, b), kind, samples)``; ``samples=None`` on a line
    edge means the straight segment between its endpoints.
    """
    pos = np.asarray(list(positions), dtype=float).reshape(-1, 3)
    if not np.isfinite(pos).all():
        raise WireframeValidationError("vertex positions must be finite")
    verts = tuple(Vertex(i, pos[i].copy()) for i in range(len(pos)))
    built: list[Edge] = []
    for eid, (ends, kind, samples) in enumerate(edges):
        kind = EdgeKind(kind)
        a, b = (int(ends[0]), int(ends[1]))
        for v in (a, b):
            if not 0 <= v < len(pos):
                raise WireframeValidationError(
                    f"edge {eid} references missing vertex {v}", edge_id=eid
                )
        if samples is None:
            if kind is EdgeKind.CURVE:
                raise WireframeValidationError(f"curve edge {eid} has no samples", edge_id=eid)
            pts = np.stack([pos[a], pos[b]])
        else:
            pts = np.asarray(list(samples), dtype=float).reshape(-1, 3)
        if len(pts) < 2:
            raise WireframeValidationError(f"edge {eid} needs at least 2 samples", edge_id=eid)
        if not np.isfinite(pts).all():
            raise WireframeValidationError(f"edge {eid} has non-finite samples", edge_id=eid)
        if np.linalg.norm(pts[0] - pos[a]) > COINCIDENCE_TOL or np.linalg.norm(pts[-1] - pos[b]) > COINCIDENCE_TOL:
            raise WireframeValidationError(
                f"edge {eid} samples do not start/end at its endpoint vertices", edge_id=eid
            )
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if (steps == 0).any():
            raise WireframeValidationError(f"edge {eid} has repeated consecutive samples", edge_id=eid)
        if kind is EdgeKind.LINE and not _collinear(pts):
            raise WireframeValidationError(f"edge {eid} is tagged line but is not straight", edge_id=eid)
        pts.setflags(write=False)
        built.append(Edge(eid, (a, b), kind, pts))
    if not built:
        raise WireframeValidationError("graph has no edges")
    for v in verts:
        v.position.setflags(write=False)
    everything = np.concatenate([pos] + [e.samples for e in built])
    center, radius = _bounding_sphere(everything)
    return WireframeGraph(verts, tuple(built), center, radius)


def _read_text(source: bytes | str | IO) -> str:
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif isinstance(source, str):
        return source
    else:
        raw = source.read()
        if isinstance(raw, str):
            return raw
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireframeParseError("stream is not UTF-8", offset=exc.start) from exc


def _parse_wirejson(text: str) -> WireframeGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WireframeParseError(exc.msg, line=exc.lineno, offset=exc.pos) from exc
    if not isinstance(doc, dict) or "vertices" not in doc or "edges" not in doc:
        raise WireframeParseError("expected an object with 'vertices' and 'edges'")
    try:
        verts = [[float(c) for c in p] for p in doc["vertices"]]
        if any(len(p) != 3 for p in verts):
            raise WireframeParseError("vertices must be [x, y, z] triples")
        records = []
        for rec in doc["edges"]:
            ends = rec["v"]
            if len(ends) != 2:
                raise WireframeParseError("edge 'v' must list two vertex ids")
            samples = rec.get("samples")
            if samples is not None:
                samples = [[float(c) for c in p] for p in samples]
                if any(len(p) != 3 for p in samples):
                    raise WireframeParseError("edge samples must be [x, y, z] triples")
            records.append(((int(ends[0]), int(ends[1])), rec.get("kind", "line"), samples))
    except (TypeError, KeyError) as exc:
        raise WireframeParseError(f"malformed record: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, WireframeParseError):
            raise
        raise WireframeParseError(str(exc)) from exc
    if not verts and not records:
        raise WireframeValidationError("graph is empty")
    return make_graph(verts, records)


def _parse_obj(text: str) -> WireframeGraph:
    verts: list[list[float]] = []
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(c) for c in parts[1:4]])
                if len(parts) < 4:
                    raise ValueError("vertex needs 3 coordinates")
            elif tag == "l":
                ids = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    ids.append(i - 1 if i > 0 else len(verts) + i)
                if len(ids) < 2:
                    raise ValueError("line element needs 2 vertices")
                for a, b in zip(ids[:-1], ids[1:]):
                    records.append(((a, b), EdgeKind.LINE, None))
        except ValueError as exc:
            raise WireframeParseError(str(exc), line=lineno) from exc
    if not records:
        raise WireframeValidationError("graph is empty")
    return make_graph(verts, records)


def load_wireframe(source: bytes | str | IO, format: WireFormat | str = WireFormat.WIRE_JSON) -> WireframeGraph:
    """Parse a wireframe from bytes/text/stream.

    OBJ input reads only ``v`` and ``l`` records; every ``l`` polyline becomes a
    chain of line edges.
    """
    fmt = WireFormat(format)
    text = _read_text(source)
    if fmt is WireFormat.WIRE_JSON:
        return _parse_wirejson(text)
    return _parse_obj(text)


def load_wireframe_file(path) -> WireframeGraph:
    from pathlib import Path

    path = Path(path)
    fmt = WireFormat.OBJ_LINES if path.suffix.lower() == ".obj" else WireFormat.WIRE_JSON
    return load_wireframe(path.read_bytes(), fmt)


def to_wirejson_dict(g: WireframeGraph) -> dict:
    return {
        "vertices": [[float(c) for c in v.position] for v in g.vertices],
        "edges": [
            {
                "v": [int(e.endpoints[0]), int(e.endpoints[1])],
                "kind": e.kind.value,
                "samples": [[float(c) for c in p] for p in e.samples],
            }
            for e in g.edges
        ],
    }


def dump_wireframe(g: WireframeGraph) -> str:
    """Canonical WireJson text (samples always present, sorted keys)."""
    return json.dumps(to_wirejson_dict(g), sort_keys=True, separators=(",", ":"))


def canonical_wirejson(text: str) -> str:
    return dump_wireframe(load_wireframe(text))


def transform(g: WireframeGraph, scale: float, offset: np.ndarray, rotation: np.ndarray | None = None) -> WireframeGraph:
    """Apply ``p -> scale * R p + offset`` to every vertex and sample."""
    R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)

    def f(p: np.ndarray) -> np.ndarray:
        return scale * (p @ R.T) + offset

    return make_graph(
        f(g.positions),
        [(e.endpoints, e.kind, f(e.samples)) for e in g.edges],
    )


def normalize_to_unit_sphere(g: WireframeGraph) -> WireframeGraph:
    """Translate and uniformly scale so the bounding sphere is the unit sphere at the origin."""
    if g.radius <= COINCIDENCE_TOL:
        raise WireframeValidationError("degenerate graph: zero bounding radius")
    if np.abs(g.center).max() <= 1e-12 and abs(g.radius - 1.0) <= 1e-12:
        return g
    s = 1.0 / g.radius
    out = transform(g, s, -g.center * s)
    # recomputed radius carries ~1 ulp of noise; the construction makes it 1
    return WireframeGraph(out.vertices, out.edges, out.center, 1.0)


@dataclass(frozen=True)
class Adjacency:
    incident: dict[int, tuple[int, ...]]
    self_loops: frozenset[int]
    endpoints: dict[int, tuple[int, int]]

    def degree(self, v: int) -> int:
        return len(self.incident.get(v, ()))

    def neighbors(self, v: int) -> list[tuple[int, int]]:
        """(edge id, other vertex) pairs in ascending edge-id order."""
        out = []
        for e in self.incident.get(v, ()):
            a, b = self.endpoints[e]
            out.append((e, b if a == v else a))
        return out

    def bucket_size(self) -> int:
        return sum(len(b) for b in self.incident.values())


def build_adjacency(g: WireframeGraph) -> Adjacency:
    buckets: dict[int, list[int]] = {v.id: [] for v in g.vertices}
    loops = set()
    for e in g.edges:
        a, b = e.endpoints
        buckets[a].append(e.id)
        if a == b:
            loops.add(e.id)
        else:
            buckets[b].append(e.id)
    return Adjacency(
        {v: tuple(sorted(es)) for v, es in buckets.items()},
        frozenset(loops),
        {e.id: e.endpoints for e in g.edges},
    )


def connected_components(adj: Adjacency) -> list[set[int]]:
    seen: set[int] = set()
    comps = []
    for start in sorted(adj.incident):
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        seen.add(start)
        while queue:
            v = queue.popleft()
            for _, w in adj.neighbors(v):
                if w not in seen:
                    seen.add(w)
                    comp.add(w)
                    queue.append(w)
        comps.append(comp)
    return comps


def edge_count_filter(graphs: Iterable[WireframeGraph], max_edges: int = 37) -> list[WireframeGraph]:
    """Keep graphs with at most ``max_edges`` edges (face counts do not exist for wireframes)."""
    return [g for g in graphs if len(g.edges) <= max_edges]


def unit_cube(side: float = 1.0, center=(0.0, 0.0, 0.0)) -> WireframeGraph:
    h = side / 2.0
    c = np.asarray(center, dtype=float)
    corners = [c + h * np.array([x, y, z]) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)]
    edges = []
    for i in range(8):
        for j in range(i + 1, 8):
            if bin(i ^ j).count("1") == 1:
                edges.append(((i, j), EdgeKind.LINE, None))
    return make_graph(corners, edges)


def circle_samples(center, radius: float, n: int, normal_axis: int = 2, start_angle: float = 0.0) -> np.ndarray:
    """Closed ring of ``n`` distinct samples plus the repeated start point."""
    ang = start_angle + np.linspace(0.0, 2.0 * math.pi, n + 1)
    ang[-1] = start_angle
    u, v = [ax for ax in range(3) if ax != normal_axis]
    pts = np.zeros((n + 1, 3))
    pts[:, u] = radius * np.cos(ang)
    pts[:, v] = radius * np.sin(ang)
    return pts + np.asarray(center, dtype=float)


def cylinder(radius: float = 0.5, height: float = 1.0, n: int = 32) -> WireframeGraph:
    """Two closed circles plus two straight silhouette lines."""
    bottom = circle_samples((0, 0, -height / 2), radius, n)
    top = circle_samples((0, 0, height / 2), radius, n)
    half = n // 2
    return make_graph(
        [bottom[0], top[0], bottom[half], top[half]],
        [
            ((0, 0), EdgeKind.CURVE, bottom),
            ((1, 1), EdgeKind.CURVE, top),
            ((0, 1), EdgeKind.LINE, None),
            ((2, 3), EdgeKind.LINE, None),
        ],
    )
