import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import LINE_FIXTURES, line_graph, random_graph
from wiredepth.camera import OrthoCamera, isometric_direction, sample_hemisphere_views
from wiredepth.complexity import (
    ComplexityReport,
    accidental_mask,
    accidental_pixel_ratio,
    complexity_report,
    curve_complexity,
    stratify,
)
from wiredepth.partial import bfs_partial_mask, max_edge_share, sample_training_condition
from wiredepth.render import rasterize
from wiredepth.wireframe import build_adjacency, connected_components, cylinder, normalize_to_unit_sphere, unit_cube

CUBE = normalize_to_unit_sphere(unit_cube())
CUBE_BUNDLE = rasterize(CUBE, OrthoCamera.looking(isometric_direction(30.0)))


def _connected(g, edges):
    verts = set()
    for e in edges:
        verts.update(g.edges[e].endpoints)
    sub = [g.edges[e] for e in edges]
    parent = {v: v for v in verts}

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for e in sub:
        parent[find(e.endpoints[0])] = find(e.endpoints[1])
    return len({find(v) for v in verts}) == 1


def test_k_zero_and_one():
    empty = bfs_partial_mask(CUBE_BUNDLE, CUBE, 0.0, 1)
    assert not empty.mask.any() and np.isnan(empty.partial).all()
    full = bfs_partial_mask(CUBE_BUNDLE, CUBE, 1.0, 1)
    assert np.array_equal(full.mask, CUBE_BUNDLE.mask)
    assert np.array_equal(full.partial[full.mask], CUBE_BUNDLE.disparity[full.mask])


def test_cube_half_reveal_seed_11():
    pair = bfs_partial_mask(CUBE_BUNDLE, CUBE, 0.5, 11)
    assert pair.restarts == 0
    assert _connected(CUBE, pair.revealed_edges)
    assert 0.5 <= pair.coverage <= 0.5 + max_edge_share(CUBE_BUNDLE)
    assert pair.coverage == pytest.approx(pair.mask.sum() / CUBE_BUNDLE.mask.sum())


def test_k_range_error():
    with pytest.raises(ValueError):
        bfs_partial_mask(CUBE_BUNDLE, CUBE, 1.2, 0)


def test_edge_measure():
    pair = bfs_partial_mask(CUBE_BUNDLE, CUBE, 0.5, 3, measure="edges")
    assert len(pair.revealed_edges) == 6


def test_restart_on_disconnected_graph():
    pts = [(-0.9, -0.5, 0), (-0.1, -0.5, 0), (0.1, 0.5, 0.2), (0.9, 0.5, 0.2)]
    g = normalize_to_unit_sphere(line_graph(pts, [(0, 1), (2, 3)]))
    b = rasterize(g, OrthoCamera.looking([0.1, 0.2, 1.0], image_size=(64, 64)))
    pair = bfs_partial_mask(b, g, 0.9, 0)
    assert pair.restarts == 1 and len(pair.revealed_edges) == 2


def test_training_condition_classes():
    empties = [sample_training_condition(CUBE_BUNDLE, CUBE, s) for s in range(200)]
    for p in empties:
        if p.is_empty:
            assert p.coverage == 0 and p.k is None
        else:
            assert 0.10 <= p.k <= 0.90
            assert 0.10 <= p.coverage <= 0.90 + max_edge_share(CUBE_BUNDLE)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.sampled_from(sorted(LINE_FIXTURES)))
def test_bfs_properties(seed, k, name):
    g = normalize_to_unit_sphere(LINE_FIXTURES[name]())
    b = rasterize(g, sample_hemisphere_views(1, seed % 1000, image_size=(64, 64))[0], 1.0)
    pair = bfs_partial_mask(b, g, k, seed)
    assert not (pair.mask & ~b.mask).any()
    assert np.array_equal(pair.partial[pair.mask], b.disparity[pair.mask])
    assert pair.coverage >= k - 1e-12
    assert pair.coverage <= k + max_edge_share(b) + 1e-12
    if pair.restarts == 0 and pair.revealed_edges:
        assert _connected(g, pair.revealed_edges)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_monotone_nesting(seed, k1, k2):
    lo, hi = sorted((k1, k2))
    a = bfs_partial_mask(CUBE_BUNDLE, CUBE, lo, seed)
    b = bfs_partial_mask(CUBE_BUNDLE, CUBE, hi, seed)
    assert b.revealed_edges[: len(a.revealed_edges)] == a.revealed_edges
    assert not (a.mask & ~b.mask).any()


# --- complexity --------------------------------------------------------------


def test_single_segment_apr_zero():
    g = normalize_to_unit_sphere(line_graph([(-1, 0, 0), (1, 0.3, 0.5)], [(0, 1)]))
    b = rasterize(g, OrthoCamera.looking([0.2, -0.1, 1.0], image_size=(64, 64)))
    assert accidental_pixel_ratio(b) == 0.0


def test_crossing_segments_hand_count():
    g = line_graph([(-0.8, 0, -0.3), (0.8, 0, -0.3), (0, -0.8, 0.3), (0, 0.8, 0.3)], [(0, 1), (2, 3)])
    cam = OrthoCamera.looking([0, 0, 1], image_size=(64, 64))
    b = rasterize(g, cam, 1.5)
    # each stroke alone
    h = rasterize(line_graph([(-0.8, 0, -0.3), (0.8, 0, -0.3)], [(0, 1)]), cam, 1.5).mask
    v = rasterize(line_graph([(0, -0.8, 0.3), (0, 0.8, 0.3)], [(0, 1)]), cam, 1.5).mask
    overlap = int((h & v).sum())
    assert overlap > 0
    assert np.array_equal(accidental_mask(b), h & v)
    assert accidental_pixel_ratio(b) == overlap / int((h | v).sum())


def test_shared_vertex_not_accidental():
    g = line_graph([(-0.8, -0.5, -0.4), (0, 0.6, 0.0), (0.8, -0.5, 0.4)], [(0, 1), (1, 2)])
    b = rasterize(g, OrthoCamera.looking([0, 0, 1], image_size=(64, 64)))
    assert accidental_pixel_ratio(b) == 0.0


def test_cube_and_cylinder_complexity():
    assert curve_complexity(unit_cube()) == 12
    assert curve_complexity(cylinder()) == 8


def test_complexity_view_invariant_apr_varies():
    g = normalize_to_unit_sphere(unit_cube())
    reps = [complexity_report(rasterize(g, c), g) for c in sample_hemisphere_views(100, 4, image_size=(96, 96))]
    assert {r.curve_complexity for r in reps} == {12}
    aprs = np.array([r.apr for r in reps])
    assert aprs.std() > 0.005 and len(np.unique(aprs)) > 50


def test_stratify_bins():
    reps = [ComplexityReport(a, c, 100, int(a * 100), c, 0) for a, c in ((0.01, 5), (0.07, 12), (0.3, 40), (0.02, 3))]
    bins = stratify(reps, [0, 10, 20], values=[1.0, 2.0, 3.0, 4.0])
    assert [b.count for b in bins] == [2, 1, 1]
    assert bins[0].mean_value == 2.5 and bins[2].upper == np.inf
    with pytest.raises(ValueError):
        stratify(reps, [10, 0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_apr_bounds(seed, n):
    g = normalize_to_unit_sphere(random_graph(np.random.default_rng(seed), n))
    b = rasterize(g, sample_hemisphere_views(1, seed, image_size=(48, 48))[0])
    acc = accidental_mask(b)
    assert not (acc & ~b.mask).any()
    assert 0.0 <= accidental_pixel_ratio(b) <= 1.0
    counts = np.bincount(b.cover_pixel, minlength=b.mask.size).reshape(b.mask.shape)
    assert not (acc & (counts < 2)).any()
