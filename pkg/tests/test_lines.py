import math

import numpy as np
import pytest

from conftest import rect
from lodrecon.errors import DegenerateRegion, EmptyInput
from lodrecon.geometry import LineSeg2, Plane, fit_plane
from lodrecon.lines import (
    CandidateLine,
    LineConfig,
    LineOrigin,
    boundary_lines,
    drop_footprint_aligned,
    intersection_lines,
    refine_step_lines,
    regularize_lines,
)
from lodrecon.planes import PlaneRegion, RegionKind


def region_of(pts, idx=None):
    idx = np.arange(len(pts)) if idx is None else np.asarray(idx)
    return PlaneRegion(fit_plane(pts[idx]), idx, RegionKind.ROOF)


def seg_to_line_distance(seg, p, q):
    """Hausdorff distance between a segment and the infinite line through p, q."""
    d = np.subtract(q, p) / math.dist(p, q)
    n = np.array([-d[1], d[0]])
    return max(abs((np.asarray(seg.a) - p) @ n), abs((np.asarray(seg.b) - p) @ n))


def test_square_boundary_four_lines():
    g = np.linspace(0, 10, 20)
    x, y = np.meshgrid(g, g, indexing="ij")
    pts = np.c_[x.ravel(), y.ravel(), np.full(400, 3.0)]
    cfg = LineConfig(alpha=0.5)
    lines = boundary_lines(region_of(pts), pts, cfg)
    assert len(lines) == 4
    sides = [((0, 0), (10, 0)), ((10, 0), (10, 10)), ((10, 10), (0, 10)), ((0, 10), (0, 0))]
    for p, q in sides:
        assert min(seg_to_line_distance(l.seg, p, q) for l in lines) <= cfg.dist_tol
    assert all(l.origin == LineOrigin.BOUNDARY and l.seg.length > 0.1 for l in lines)


def test_l_shape_six_lines():
    g = np.arange(0, 10.001, 0.2)
    x, y = np.meshgrid(g, g, indexing="ij")
    keep = ~((x > 5) & (y > 5))
    pts = np.c_[x[keep], y[keep], np.full(keep.sum(), 3.0)]
    lines = boundary_lines(region_of(pts), pts, LineConfig(alpha=0.1))
    assert len(lines) == 6


def test_vertical_region_is_degenerate():
    z, y = np.meshgrid(np.arange(5.0), np.arange(5.0), indexing="ij")
    pts = np.c_[np.zeros(25), y.ravel(), z.ravel()]
    with pytest.raises(DegenerateRegion):
        boundary_lines(region_of(pts), pts)


def test_small_roof_region_not_degenerate(rng):
    xy = rng.uniform(0, 2, (15, 2))
    pts = np.c_[xy, np.full(15, 4.0)]
    boundary_lines(region_of(pts), pts)


def _plane_pts(fn, xs, ys):
    x, y = np.meshgrid(xs, ys, indexing="ij")
    x, y = x.ravel(), y.ravel()
    return np.c_[x, y, fn(x, y)]


def test_ridge_intersection_line():
    a = _plane_pts(lambda x, y: 3 + x, np.arange(-2, 0, 0.25), np.arange(0, 4, 0.25))
    b = _plane_pts(lambda x, y: 3 - x, np.arange(0.25, 2.1, 0.25), np.arange(0, 4, 0.25))
    pts = np.vstack([a, b])
    ra, rb = region_of(pts, range(len(a))), region_of(pts, range(len(a), len(pts)))
    out = intersection_lines(ra, rb, pts)
    assert len(out) == 1
    line = out[0]
    assert line.origin == LineOrigin.INTERSECTION and line.source_regions == (0, 1)
    assert abs(line.seg.a[0]) < 1e-9 and abs(line.seg.b[0]) < 1e-9


def test_parallel_planes_no_line():
    a = _plane_pts(lambda x, y: np.full_like(x, 3.0), np.arange(0, 2, 0.25), np.arange(0, 2, 0.25))
    b = _plane_pts(lambda x, y: np.full_like(x, 6.0), np.arange(2.25, 4, 0.25), np.arange(0, 2, 0.25))
    pts = np.vstack([a, b])
    assert intersection_lines(region_of(pts, range(len(a))), region_of(pts, range(len(a), len(pts))), pts) == []


def test_distant_planes_no_line():
    a = _plane_pts(lambda x, y: 3 + x, np.arange(-2, 0, 0.25), np.arange(0, 2, 0.25))
    b = _plane_pts(lambda x, y: 3 - x, np.arange(5, 7, 0.25), np.arange(0, 2, 0.25))
    pts = np.vstack([a, b])
    assert intersection_lines(region_of(pts, range(len(a))), region_of(pts, range(len(a), len(pts))), pts) == []


def cand(a, b, origin=LineOrigin.BOUNDARY):
    return CandidateLine(LineSeg2(a, b), origin, (0,))


def test_ridge_seen_three_times():
    lines = [
        cand((0.0, 0.0), (0.0, 10.0), LineOrigin.INTERSECTION),
        cand((0.1, 0.0), (0.1, 10.0)),
        cand((-0.1, 0.0), (-0.1, 10.0)),
    ]
    out = regularize_lines(lines, LineConfig(dist_tol=0.5))
    assert len(out) == 1
    assert abs(out[0].a[0]) < 1e-12 and abs(out[0].b[0]) < 1e-12


def test_intersection_weight_pulls_offset():
    lines = [cand((0.0, 0.0), (0.0, 10.0), LineOrigin.INTERSECTION), cand((0.3, 0.0), (0.3, 10.0))]
    out = regularize_lines(lines)
    assert out[0].a[0] == pytest.approx(0.1)


def test_perpendicular_lines_unchanged():
    out = regularize_lines([cand((0.0, 0.0), (5.0, 0.0)), cand((0.0, 0.0), (0.0, 5.0))])
    assert len(out) == 2


def test_parallel_lines_apart_not_merged():
    out = regularize_lines([cand((0.0, 0.0), (5.0, 0.0)), cand((0.0, 1.0), (5.0, 1.0))], LineConfig(dist_tol=0.5))
    assert len(out) == 2


def test_regularize_empty():
    with pytest.raises(EmptyInput):
        regularize_lines([])


def random_lines(rng, n=25):
    out = []
    for _ in range(n):
        a = rng.uniform(0, 20, 2)
        ang = rng.choice([0.0, 0.5 * math.pi, 0.8]) + rng.normal(0, 0.03)
        b = a + rng.uniform(1, 6) * np.array([math.cos(ang), math.sin(ang)])
        out.append(cand(tuple(a), tuple(b)))
    return out


def _as_set(segs):
    return sorted(tuple(np.round(np.r_[s.a, s.b], 6)) for s in segs)


def _as_undirected(segs, nd=5):
    out = []
    for s in segs:
        a, b = tuple(np.round(s.a, nd)), tuple(np.round(s.b, nd))
        out.append(min(a, b) + max(a, b))
    return sorted(out)


def test_regularize_idempotent_and_shrinking(rng):
    for _ in range(20):
        lines = random_lines(rng)
        once = regularize_lines(lines)
        twice = regularize_lines(once)
        assert len(once) <= len(lines)
        assert len(twice) == len(once)
        for s, t in zip(once, twice):
            assert np.allclose(s.a, t.a, atol=1e-9) and np.allclose(s.b, t.b, atol=1e-9)


def test_regularize_rotation_equivariant(rng):
    for _ in range(10):
        lines = random_lines(rng)
        th = rng.uniform(0, 2 * math.pi)
        R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        rot = [cand(tuple(R @ l.seg.a), tuple(R @ l.seg.b)) for l in lines]
        expected = [LineSeg2(tuple(R @ s.a), tuple(R @ s.b)) for s in regularize_lines(lines)]
        got = regularize_lines(rot)
        assert len(got) == len(expected)
        for e, g in zip(_as_undirected(expected), _as_undirected(got)):
            assert np.allclose(e, g, atol=1e-5)


def test_drop_footprint_aligned():
    fp = rect(0, 0, 10, 6)
    segs = [LineSeg2((0.5, 0.2), (9.5, 0.2)), LineSeg2((5.0, 0.0), (5.0, 6.0))]
    out = drop_footprint_aligned(segs, fp, LineConfig(dist_tol=0.5))
    assert out == [segs[1]]


def test_refine_step_line_separates_levels(rng):
    xy = rng.uniform(0, 10, (1500, 2))
    step = 4.0 + 0.01 * xy[:, 1]  # edge tilted 0.57 degrees, inside the search window
    tower = xy[:, 0] < step
    pts = np.c_[xy, np.where(tower, 9.0, 4.0)]
    regions = [PlaneRegion(Plane((0.0, 0.0, 1.0), 9.0), np.flatnonzero(tower), RegionKind.ROOF),
               PlaneRegion(Plane((0.0, 0.0, 1.0), 4.0), np.flatnonzero(~tower), RegionKind.ROOF)]
    guess = LineSeg2((4.2, 0.0), (4.2, 10.0))
    (out,) = refine_step_lines([guess], regions, pts, LineConfig())
    a, b = np.asarray(out.a), np.asarray(out.b)
    d = (b - a) / np.linalg.norm(b - a)
    side = (xy - a) @ np.array([-d[1], d[0]])
    # every tower point on one side, every low point on the other
    assert (np.sign(side[tower]) == np.sign(side[tower][0])).all()
    assert (np.sign(side[~tower]) == -np.sign(side[tower][0])).all()


def test_refine_keeps_ridge_lines():
    x, y = np.meshgrid(np.arange(-3, 3.01, 0.3), np.arange(0, 6, 0.3), indexing="ij")
    x, y = x.ravel(), y.ravel()
    pts = np.c_[x, y, 5 - 0.5 * np.abs(x)]
    west, east = np.flatnonzero(x < 0), np.flatnonzero(x > 0)
    regions = [region_of(pts, west), region_of(pts, east)]
    ridge = LineSeg2((0.0, 0.0), (0.0, 6.0))
    assert refine_step_lines([ridge], regions, pts) == [ridge]
