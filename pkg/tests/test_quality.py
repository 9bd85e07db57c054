import numpy as np
import pytest

from conftest import rect, square
from lodrecon.errors import NoCoveredPoints
from lodrecon.geometry import Mesh, Plane, Polygon2
from lodrecon.ingest import BuildingPoints, FootprintRecord
from lodrecon.lod import extrude_faces, extrude_prisms, polygon_faces
from lodrecon.pipeline import reconstruct_building
from lodrecon.quality import (
    HOLE_OUTSIDE_EXTERIOR,
    INCONSISTENT_ORIENTATION,
    NEGATIVE_VOLUME,
    NO_GEOMETRY,
    NON_PLANAR_FACE,
    NOT_CLOSED,
    RING_TOO_SMALL,
    SELF_INTERSECTION,
    VALID,
    WRONG_ORIENTATION,
    QualityAttributes,
    coverage_stats,
    euler_characteristic,
    rmse_and_max,
    validity_2d,
    validity_3d,
)
from lodrecon.synth import generate_building


def cube():
    v = np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)], float)
    faces = [[[0, 3, 2, 1]], [[4, 5, 6, 7]], [[0, 1, 5, 4]], [[1, 2, 6, 5]], [[2, 3, 7, 6]], [[3, 0, 4, 7]]]
    return Mesh(v, faces, ["Ground", "Roof", "Wall", "Wall", "Wall", "Wall"])


def flat_box(z=3.0, side=10.0):
    coords, faces = polygon_faces(square(0, 0, side))
    return extrude_prisms(coords, faces, [z], 0.0)


def test_validity_3d_cube():
    assert validity_3d(cube()) == VALID


def test_cube_missing_top():
    m = cube()
    m = Mesh(m.vertices, m.faces[:1] + m.faces[2:], m.semantics[:1] + m.semantics[2:])
    assert validity_3d(m) == NOT_CLOSED


def test_cube_flipped_face():
    m = cube()
    faces = [f for f in m.faces]
    faces[1] = [faces[1][0][::-1]]
    assert validity_3d(Mesh(m.vertices, faces, m.semantics)) == INCONSISTENT_ORIENTATION


def test_inside_out_cube():
    m = cube()
    faces = [[f[0][::-1]] for f in m.faces]
    assert validity_3d(Mesh(m.vertices, faces, m.semantics)) == NEGATIVE_VOLUME


def test_non_planar_face():
    m = cube()
    v = m.vertices.copy()
    v[6, 2] += 1e-3
    assert validity_3d(Mesh(v, m.faces, m.semantics)) == NON_PLANAR_FACE


def test_no_geometry():
    assert validity_3d(None) == NO_GEOMETRY


def test_two_shells_checked_separately():
    a = cube()
    b = Mesh(a.vertices + [2.0, 0, 0], a.faces, a.semantics)
    glued = Mesh(np.vstack([a.vertices, b.vertices]), a.faces + [[[v + 8 for v in f[0]]] for f in b.faces],
                 a.semantics + b.semantics)
    assert euler_characteristic(glued) == 4
    assert validity_3d(glued) == VALID  # two shells, chi = 2 each


def test_courtyard_solid_is_valid():
    fp = square(0, 0, 10, holes=[[(4, 4), (6, 4), (6, 6), (4, 6)]])
    coords, faces = polygon_faces(fp)
    m = extrude_prisms(coords, faces, [5.0], 0.0)
    assert validity_3d(m) == VALID
    assert m.signed_volume() == pytest.approx(96 * 5)


def test_validity_2d():
    assert validity_2d(square()) == VALID
    bow = Polygon2.from_coords([(0, 0), (1, 1), (1, 0), (0, 1)], normalize=False)
    assert validity_2d(bow) == SELF_INTERSECTION
    out_hole = square(holes=[[(5, 5), (6, 5), (6, 6), (5, 6)]])
    assert validity_2d(out_hole) == HOLE_OUTSIDE_EXTERIOR
    assert validity_2d(Polygon2(np.array([(0.0, 0.0), (1.0, 0.0)]))) == RING_TOO_SMALL
    cw = Polygon2(np.array([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]))
    assert validity_2d(cw) == WRONG_ORIENTATION


def test_rmse_examples():
    box = flat_box(3.0)
    pts = np.array([(5, 5, 3.0)] * 3)
    assert rmse_and_max(box, pts) == (0.0, 0.0)
    pts = np.array([(2, 2, 3.1)] * 4 + [(7, 7, 2.9)] * 4)
    r, m = rmse_and_max(box, pts)
    assert r == pytest.approx(0.1) and m == pytest.approx(0.1)


def test_rmse_chimney_point():
    coords, faces = polygon_faces(rect(0, 0, 10, 10))
    coords = np.vstack([coords, [(5, 0), (5, 10)]])
    faces = [[[0, 4, 5, 3]], [[4, 1, 2, 5]]]
    planes = [Plane.from_normal_point((-0.4, 0, 1), (0, 0, 3)), Plane.from_normal_point((0.4, 0, 1), (10, 0, 3))]
    gable = extrude_faces(coords, faces, planes, 0.0)
    xs = np.linspace(0.5, 9.5, 10)
    z = np.array([planes[0].z_at(x, 5) if x < 5 else planes[1].z_at(x, 5) for x in xs])
    pts = np.c_[xs, np.full(10, 5.0), z]
    pts[3, 2] += 2.0
    r, m = rmse_and_max(gable, pts)
    assert m >= 2.0 - 1e-9 and r < m


def test_rmse_excludes_uncovered():
    box = flat_box(3.0)
    with pytest.raises(NoCoveredPoints):
        rmse_and_max(box, np.array([(50, 50, 3.0)]))
    r, _ = rmse_and_max(box, np.array([(50, 50, 9.0), (5, 5, 3.0)]))
    assert r == 0.0


def test_rmse_translation_invariant(rng):
    box = flat_box(3.0)
    pts = np.c_[rng.uniform(0, 10, (50, 2)), 3 + rng.normal(0, 0.1, 50)]
    t = np.array([1234.5, -987.25, 0.0])
    a = rmse_and_max(box, pts)
    b = rmse_and_max(box.translated(t), pts + t)
    assert a == pytest.approx(b, rel=1e-9)


def test_coverage_stats():
    fp = square(0, 0, 10)
    g = np.arange(10) + 0.5
    x, y = np.meshgrid(g, g, indexing="ij")
    full = np.c_[x.ravel(), y.ravel(), np.zeros(100)]
    assert coverage_stats(fp, full) == (100, 0.0)
    assert coverage_stats(fp, np.zeros((0, 3))) == (0, 1.0)
    half = full[full[:, 0] < 5]
    assert coverage_stats(fp, half) == (50, 0.5)


def test_quality_properties_keys():
    props = QualityAttributes(flags={"NoData", "FallbackLoD"}).as_properties()
    assert props["flags"] == "FallbackLoD,NoData"
    assert props["validity_3d_lod22"] == NO_GEOMETRY


def test_rmse_noise_consistent():
    """Reconstructed-model RMSE lies in [sigma/2, 2 sigma] for noisy planar roofs."""
    rng = np.random.default_rng(7)
    sigma = 0.05
    ok = 0
    for i in range(100):
        fp, roof, ground, _ = generate_building(i, ("flat", "gable")[i % 2], rng, sigma)
        m = reconstruct_building(FootprintRecord(f"b{i}", fp), BuildingPoints(f"b{i}", roof, ground))
        r = m.quality.rmse_lod22
        ok += r is not None and 0.5 * sigma <= r <= 2 * sigma
    assert ok >= 95
