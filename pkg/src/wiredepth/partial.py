"""BFS-connected partial-depth conditioning (p, m) from a rendered bundle."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .render import RenderBundle
from .wireframe import Adjacency, WireframeGraph, build_adjacency

EMPTY_PROBABILITY = 0.5
K_RANGE = (0.10, 0.90)


@dataclass(frozen=True)
class PartialDepthPair:
    partial: np.ndarray  # (H, W) normalized disparity, NaN where m = 0
    mask: np.ndarray  # (H, W) bool
    revealed_edges: tuple[int, ...]  # in reveal order
    coverage: float
    restarts: int = 0
    k: float | None = None

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "PartialDepthPair":
        return cls(np.full(shape, np.nan), np.zeros(shape, dtype=bool), (), 0.0, 0, None)

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()


def _bfs_edge_order(adj: Adjacency, rng: np.random.Generator, stop) -> tuple[list[int], int]:
    """Visit edges breadth-first; ``stop(edge)`` is called after each reveal.

    Restarts from a random unvisited vertex when a component runs out.
    Returns (edge order, restart count).
    """
    vertices = sorted(adj.incident)
    visited_v: set[int] = set()
    visited_e: set[int] = set()
    order: list[int] = []
    restarts = 0
    start = vertices[int(rng.integers(len(vertices)))]
    while True:
        queue = deque([start])
        visited_v.add(start)
        while queue:
            v = queue.popleft()
            for e, w in adj.neighbors(v):
                if e in visited_e:
                    continue
                visited_e.add(e)
                order.append(e)
                if stop(e):
                    return order, restarts
                if w not in visited_v:
                    visited_v.add(w)
                    queue.append(w)
        remaining = [v for v in vertices if v not in visited_v]
        if not remaining:
            return order, restarts
        start = remaining[int(rng.integers(len(remaining)))]
        restarts += 1


def bfs_partial_mask(
    bundle: RenderBundle,
    g: WireframeGraph,
    k: float,
    seed: int,
    measure: str = "pixels",
) -> PartialDepthPair:
    """Reveal depth on edges in BFS order until coverage first reaches ``k``.

    ``measure="pixels"`` counts stroke pixels; ``"edges"`` counts edges.
    """
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"k must lie in [0, 1], got {k}")
    if measure not in ("pixels", "edges"):
        raise ValueError("measure must be 'pixels' or 'edges'")
    H, W = bundle.shape
    if k == 0.0:
        pair = PartialDepthPair.empty((H, W))
        return PartialDepthPair(pair.partial, pair.mask, (), 0.0, 0, k)
    rng = np.random.default_rng(seed)
    adj = build_adjacency(g)
    pixels = bundle.edge_pixel_sets()
    total_px = int(bundle.mask.sum())
    n_edges = len(g.edges)
    revealed = np.zeros(H * W, dtype=bool)
    state = {"count": 0, "edges": 0}

    def stop(e: int) -> bool:
        px = pixels.get(e)
        if px is not None and len(px):
            fresh = px[~revealed[px]]
            revealed[fresh] = True
            state["count"] += len(fresh)
        state["edges"] += 1
        cov = state["count"] / total_px if measure == "pixels" else state["edges"] / n_edges
        return cov >= k

    order, restarts = _bfs_edge_order(adj, rng, stop)
    m = revealed.reshape(H, W)
    p = np.where(m, bundle.disparity, np.nan)
    return PartialDepthPair(p, m, tuple(order), state["count"] / total_px, restarts, k)


def sample_training_condition(bundle: RenderBundle, g: WireframeGraph, seed: int) -> PartialDepthPair:
    """Half the time no partial depth; otherwise BFS reveal with k ~ U[0.1, 0.9]."""
    rng = np.random.default_rng(seed)
    if rng.random() < EMPTY_PROBABILITY:
        return PartialDepthPair.empty(bundle.shape)
    k = float(rng.uniform(*K_RANGE))
    return bfs_partial_mask(bundle, g, k, int(rng.integers(2**63 - 1)))


def max_edge_share(bundle: RenderBundle) -> float:
    """Largest fraction of stroke pixels owned by a single edge."""
    total = int(bundle.mask.sum())
    sets = bundle.edge_pixel_sets()
    return max((len(p) for p in sets.values()), default=0) / total
