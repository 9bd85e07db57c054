import json

import numpy as np
import pytest

from conftest import square, synthetic_building, synthetic_model
from lodrecon import pipeline
from lodrecon.config import PipelineConfig, TilingConfig
from lodrecon.geometry import ROOF, Polygon2
from lodrecon.ingest import BuildingPoints, FootprintRecord, PointClass, PointCloud
from lodrecon.pipeline import FAILED, FLAGGED, OK, reconstruct_building, run
from lodrecon.quality import (
    FALLBACK_LOD,
    INVALID_FOOTPRINT,
    NO_DATA,
    NO_GEOMETRY,
    NO_GROUND_POINTS,
    NO_ROOF_PLANES,
    NO_ROOF_POINTS,
    SELF_INTERSECTION,
    STAGE_FAILURE,
    VALID,
)
from lodrecon.synth import CLEAN_KINDS, write_corpus


def test_gable_parts():
    m = synthetic_model("gable")
    assert m.status == OK
    assert len(m.lod22.faces_with(ROOF)) == 2
    assert len(m.parts) == 1
    assert m.quality.validity_3d == {"1.2": VALID, "1.3": VALID, "2.2": VALID}
    assert m.quality.rmse_lod22 < 0.1


def test_ltower_parts():
    m = synthetic_model("ltower")
    assert m.status == OK and len(m.parts) == 2
    assert sum(p.polygon.area for p in m.parts) == pytest.approx(m.footprint.area)


def test_too_few_roof_points_gives_lod12_only():
    fp = FootprintRecord("x", square(0, 0, 10))
    roof = np.array([[2, 2, 5.0], [4, 3, 5.1], [6, 7, 4.9], [8, 2, 5.0], [3, 8, 5.05]])
    ground = np.array([[-2.0, -2.0, 0.0], [12.0, 12.0, 0.0]])
    m = reconstruct_building(fp, BuildingPoints("x", roof, ground))
    assert m.status == FLAGGED and NO_ROOF_PLANES in m.quality.flags
    assert m.lod12 is not None and m.lod13 is None and m.lod22 is None
    assert m.quality.validity_3d["2.2"] == NO_GEOMETRY


def test_no_roof_points():
    fp = FootprintRecord("x", square(0, 0, 10))
    m = reconstruct_building(fp, BuildingPoints("x", np.zeros((0, 3)), np.array([[-1.0, -1.0, 0.5]])))
    assert {NO_ROOF_POINTS, NO_DATA} <= m.quality.flags
    assert m.solids() == {} and m.ground_h == 0.5


def test_no_ground_points_uses_fallback():
    fp, cloud, truth = synthetic_building("flat")
    roof_only = cloud.subset(cloud.cls == PointClass.BUILDING)
    m = reconstruct_building(fp, roof_only)
    assert NO_GROUND_POINTS in m.quality.flags and m.status == FLAGGED
    assert m.ground_h == pytest.approx(m.heights.h_min - 3.0)
    assert m.lod22 is not None


def test_bow_tie_footprint():
    fp = FootprintRecord("bt", Polygon2.from_coords([(0, 0), (10, 10), (10, 0), (0, 10)], normalize=False))
    m = reconstruct_building(fp, PointCloud.empty())
    assert m.status == FAILED and m.quality.validity_2d == SELF_INTERSECTION
    assert INVALID_FOOTPRINT in m.quality.flags and m.solids() == {}


def test_crash_is_contained(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(pipeline, "detect_planes", boom)
    fp, cloud, _ = synthetic_building("gable")
    m = reconstruct_building(fp, cloud)
    assert m.status == FAILED and STAGE_FAILURE in m.quality.flags
    assert "boom" in m.reason


def test_lod22_failure_downgrades(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("arrangement")

    monkeypatch.setattr(pipeline, "build_arrangement", boom)
    m = synthetic_model("gable")
    assert m.status == FLAGGED
    assert FALLBACK_LOD in m.quality.flags
    assert m.lod22.signed_volume() == pytest.approx(m.lod13.signed_volume())
    assert m.quality.validity_3d["2.2"] == VALID


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    return write_corpus(d, 12, seed=5, kinds=CLEAN_KINDS)


def test_run_counts_and_outputs(corpus, tmp_path):
    cfg = PipelineConfig(corpus["footprints"], corpus["points"], tmp_path, tiling=TilingConfig(max_per_leaf=4))
    report = run(cfg)
    assert sum(report.counts.values()) == 12 == len(report.buildings)
    assert sum(report.rmse_histogram()["counts"]) == len(report.rmse_values())
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["tiles"]) >= 3
    assert sum(t["n_buildings"] for t in manifest["tiles"]) == 12
    for t in manifest["tiles"]:
        for out in t["outputs"]:
            assert (tmp_path / out).exists()
    truth = {b["id"]: b for b in json.loads(corpus["truth"].read_text())["buildings"]}
    assert {b["id"] for b in report.buildings} == set(truth)


def test_debug_partition_files(corpus, tmp_path):
    cfg = PipelineConfig(corpus["footprints"], corpus["points"], tmp_path, debug_partition=True)
    run(cfg)
    files = sorted(p.name for p in (tmp_path / "t" / "debug").iterdir())
    assert "b00001_initial.geojson" in files and "b00001_final.geojson" in files
    gj = json.loads((tmp_path / "t" / "debug" / "b00001_final.geojson").read_text())
    assert gj["type"] == "FeatureCollection" and len(gj["features"]) == 2


def test_workers_give_identical_outputs(corpus, tmp_path):
    outs = []
    for w in (1, 3):
        d = tmp_path / f"w{w}"
        run(PipelineConfig(corpus["footprints"], corpus["points"], d, workers=w, tiling=TilingConfig(max_per_leaf=4)))
        outs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "report.json"})
    assert outs[0] == outs[1]
