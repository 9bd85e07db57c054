import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rect, square
from lodrecon.errors import EmptyInput, ExtrusionError, NoGroundPoints, NoRoofPoints, NonVerticalizablePlane
from lodrecon.geometry import WALL, LineSeg2, Plane
from lodrecon.lod import (
    extrude_faces,
    extrude_lod12,
    extrude_lod13,
    extrude_lod22,
    extrude_prisms,
    fallback_ground_height,
    ground_height,
    lod13_partition,
    merge_parts_lod13,
    percentile,
    polygon_faces,
    reference_heights,
)
from lodrecon.partition import build_arrangement
from lodrecon.planes import PlaneRegion, RegionKind
from lodrecon.quality import VALID, euler_characteristic, validity_3d


def test_percentile_examples():
    assert percentile(range(1, 11), 70) == 7
    assert percentile([5], 1) == 5 and percentile([5], 100) == 5
    assert percentile([1, 2, 3, 4], 50) == 2
    with pytest.raises(EmptyInput):
        percentile([], 50)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=60), st.integers(1, 100))
def test_percentile_oracle(values, p):
    rank = -(-p * len(values) // 100)  # integer ceil
    assert percentile(values, p) == sorted(values)[rank - 1]


def test_ground_height():
    zs = np.arange(20) / 10
    assert ground_height(np.c_[np.zeros((20, 2)), zs]) == 0.0
    assert ground_height(np.array([[0, 0, 1.2]])) == 1.2
    with pytest.raises(NoGroundPoints):
        ground_height(np.zeros((0, 3)))
    assert fallback_ground_height([10.0, 12.0]) == 7.0


def test_reference_heights():
    h = reference_heights(range(1, 11))
    assert (h.h_min, h.h_max, h.h_p50, h.h_p70) == (1, 10, 5, 7)
    assert reference_heights([4, 4, 4]).as_properties() == {"h_min": 4, "h_max": 4, "h_50p": 4, "h_70p": 4}
    with pytest.raises(EmptyInput):
        reference_heights([])


def test_reference_height_ordering(rng):
    for _ in range(100):
        h = reference_heights(rng.normal(5, 2, rng.integers(1, 50)))
        assert h.h_min <= h.h_p50 <= h.h_p70 <= h.h_max


def flat(z, n=1):
    return PlaneRegion(Plane((0.0, 0.0, 1.0), float(z)), np.arange(n), RegionKind.ROOF)


def test_box_volume():
    part = build_arrangement(square(0, 0, 10), []).with_labels([0])
    m = extrude_lod22(part, [flat(3.0)], 0.0)
    assert validity_3d(m) == VALID
    assert euler_characteristic(m) == 2
    assert abs(m.signed_volume() - 300) <= 1e-6 * 300


def gable_mesh():
    part = build_arrangement(square(0, 0, 10), [LineSeg2((5.0, 0.0), (5.0, 10.0))])
    west = 0 if part.polygon(0).centroid()[0] < 5 else 1
    labels = [0, 1] if west == 0 else [1, 0]
    regions = [
        PlaneRegion(Plane.from_normal_point((-0.4, 0.0, 1.0), (0, 0, 3)), np.arange(3), RegionKind.ROOF),
        PlaneRegion(Plane.from_normal_point((0.4, 0.0, 1.0), (10, 0, 3)), np.arange(3), RegionKind.ROOF),
    ]
    return extrude_lod22(part.with_labels(labels), regions, 0.0)


def test_gable_volume():
    m = gable_mesh()
    assert validity_3d(m) == VALID
    assert abs(m.signed_volume() - 400) <= 1e-6 * 400


def test_no_wall_between_coincident_parts():
    part = build_arrangement(rect(0, 0, 10, 5), [LineSeg2((5.0, 0.0), (5.0, 5.0))]).with_labels([0, 1])
    m = extrude_lod22(part, [flat(3.0), flat(3.0)], 0.0)
    assert validity_3d(m) == VALID
    for fi in m.faces_with(WALL):
        xs = m.vertices[m.faces[fi][0], 0]
        assert not np.allclose(xs, 5.0)


def test_near_vertical_plane_rejected():
    part = build_arrangement(square(0, 0, 10), []).with_labels([0])
    steep = PlaneRegion(Plane.from_normal_point((1.0, 0.0, 0.005), (0, 0, 3)), np.arange(3), RegionKind.WALL)
    with pytest.raises(NonVerticalizablePlane):
        extrude_lod22(part, [steep], 0.0)


def test_roof_below_ground_rejected():
    part = build_arrangement(square(0, 0, 10), []).with_labels([0])
    with pytest.raises(ExtrusionError):
        extrude_lod22(part, [flat(1.0)], 2.0)


def test_crossing_heights_split_walls():
    # two parts whose planes cross along the shared edge
    part = build_arrangement(rect(0, 0, 10, 4), [LineSeg2((5.0, 0.0), (5.0, 4.0))])
    west = 0 if part.polygon(0).centroid()[0] < 5 else 1
    labels = [0, 1] if west == 0 else [1, 0]
    regions = [
        PlaneRegion(Plane.from_normal_point((0.0, -0.5, 1.0), (0, 0, 4)), np.arange(3), RegionKind.ROOF),
        PlaneRegion(Plane.from_normal_point((0.0, 0.5, 1.0), (0, 0, 6)), np.arange(3), RegionKind.ROOF),
    ]
    m = extrude_lod22(part.with_labels(labels), regions, 0.0)
    assert validity_3d(m) == VALID
    # volume oracle: the two prisms under their planes
    vol_w = 5 * (4 * 4 + 0.5 * 16 / 2)
    vol_e = 5 * (4 * 6 - 0.5 * 16 / 2)
    assert m.signed_volume() == pytest.approx(vol_w + vol_e, rel=1e-9)


def test_merge_examples():
    adj = {(0, 1): 1.0}
    assert len(merge_parts_lod13([[3.0], [5.5]], adj).groups) == 1
    assert len(merge_parts_lod13([[3.0], [6.5]], adj).groups) == 2


def test_merge_chain():
    z = [[3.0] * 10, [5.0] * 10, [8.0] * 10]
    out = merge_parts_lod13(z, {(0, 1): 1.0, (1, 2): 1.0})
    assert out.groups == [[0, 1], [2]]
    assert out.heights == [5.0, 8.0]


def test_merge_monotone(rng):
    for _ in range(30):
        n = 6
        z = [rng.normal(rng.uniform(3, 15), 0.2, 10) for _ in range(n)]
        adj = {(i, i + 1): 1.0 for i in range(n - 1)}
        counts = [len(merge_parts_lod13(z, adj, t).groups) for t in (0.0, 1.0, 2.0, 3.0, 5.0, 100.0)]
        assert counts == sorted(counts, reverse=True)


def test_nodata_part_inherits_longest_edge_neighbour():
    # part 2 has no points; it shares 3 m with part 0 and 1 m with part 1
    out = merge_parts_lod13([[3.0], [9.0], []], {(0, 1): 1.0, (0, 2): 3.0, (1, 2): 1.0}, threshold=0.5)
    assert out.groups == [[0, 2], [1]]
    assert out.heights == [3.0, 9.0]


def test_lod13_examples():
    coords, faces = polygon_faces(square(0, 0, 10))
    m = extrude_lod13(coords, faces, [6.0], 0.0)
    assert m.signed_volume() == pytest.approx(600)
    part = build_arrangement(rect(0, 0, 10, 10), [LineSeg2((5.0, 0.0), (5.0, 10.0))])
    west = 0 if part.polygon(0).centroid()[0] < 5 else 1
    hs = [3.0, 6.0] if west == 0 else [6.0, 3.0]
    m = extrude_lod13(part.vertices, part.faces, hs, 0.0)
    assert validity_3d(m) == VALID
    assert m.signed_volume() == pytest.approx(450)
    inner = [fi for fi in m.faces_with(WALL) if np.allclose(m.vertices[m.faces[fi][0], 0], 5.0)]
    assert len(inner) == 1
    zs = m.vertices[m.faces[inner[0]][0], 2]
    assert zs.max() - zs.min() == pytest.approx(3.0)


def test_lod13_equal_heights_no_wall():
    part = build_arrangement(rect(0, 0, 10, 10), [LineSeg2((5.0, 0.0), (5.0, 10.0))])
    merged = merge_parts_lod13([[3.0], [3.0]], part.adjacency, threshold=0.0)
    assert len(merged.groups) == 2
    faces, owners = lod13_partition(part, merged)
    m = extrude_lod13(part.vertices, faces, [merged.heights[o] for o in owners], 0.0)
    assert validity_3d(m) == VALID
    assert not [fi for fi in m.faces_with(WALL) if np.allclose(m.vertices[m.faces[fi][0], 0], 5.0)]


def test_lod12_examples():
    fp = square(0, 0, 10)
    m = extrude_lod12(fp, np.arange(1, 11), 0.0)
    assert m.signed_volume() == pytest.approx(700)
    assert extrude_lod12(fp, [4.0] * 5, 0.0).signed_volume() == pytest.approx(400)
    with pytest.raises(NoRoofPoints):
        extrude_lod12(fp, [], 0.0)


def test_flat_roof_lods_agree():
    fp = rect(0, 0, 12, 7)
    z = [5.0] * 30
    v12 = extrude_lod12(fp, z, 1.0).signed_volume()
    part = build_arrangement(fp, [LineSeg2((4.0, 0.0), (4.0, 7.0))]).with_labels([0, 0])
    v22 = extrude_lod22(part, [flat(5.0)], 1.0).signed_volume()
    merged = merge_parts_lod13([z[:10], z[10:]], part.adjacency)
    faces, owners = lod13_partition(part, merged)
    v13 = extrude_lod13(part.vertices, faces, [merged.heights[o] for o in owners], 1.0).signed_volume()
    assert v12 == pytest.approx(v22, rel=1e-6) and v13 == pytest.approx(v22, rel=1e-6)
