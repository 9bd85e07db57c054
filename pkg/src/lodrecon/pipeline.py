"""End-to-end reconstruction of buildings and tiled batch runs."""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig, ReconstructionConfig
from .errors import NoGroundPoints, NonVerticalizablePlane, ReconstructionError
from .geometry import Mesh, Polygon2
from .ingest import BuildingPoints, FootprintRecord, PointCloud, crop_points, read_footprints, read_points
from .lines import drop_footprint_aligned, extract_lines, refine_step_lines, regularize_lines
from .lod import (
    ReferenceHeights,
    extrude_lod12,
    extrude_lod13,
    extrude_lod22,
    fallback_ground_height,
    ground_height,
    lod13_partition,
    merge_parts_lod13,
    percentile,
    polygon_faces,
    reference_heights,
)
from .partition import RoofPartition, assign_planes, build_arrangement, dissolve_edges, face_point_index
from .planes import RegionKind, classify_regions, detect_planes, roof_regions
from .quality import (
    FALLBACK_LOD,
    INVALID_FOOTPRINT,
    INVALID_SOLID,
    NO_COVERED_POINTS,
    NO_DATA,
    NO_GEOMETRY,
    NO_GROUND_POINTS,
    NO_ROOF_PLANES,
    NO_ROOF_POINTS,
    NON_VERTICALIZABLE,
    STAGE_FAILURE,
    VALID,
    QualityAttributes,
    coverage_stats,
    rmse_and_max,
    validity_2d,
    validity_3d,
    vertical_errors,
)

logger = logging.getLogger(__name__)

OK = "OK"
FLAGGED = "flagged"
FAILED = "failed"

RMSE_BIN = 0.1


@dataclass
class RoofPart:
    """One LoD1.3 roof part: 2D polygon, its reference heights (None without points) and prism height."""

    polygon: Polygon2
    heights: ReferenceHeights | None
    height: float
    parent_id: str


@dataclass(eq=False)
class BuildingModel:
    building_id: str
    footprint: Polygon2
    attributes: dict = field(default_factory=dict)
    ground_h: float | None = None
    heights: ReferenceHeights | None = None
    lod12: Mesh | None = None
    lod13: Mesh | None = None
    lod22: Mesh | None = None
    parts: list[RoofPart] = field(default_factory=list)
    quality: QualityAttributes = field(default_factory=QualityAttributes)
    status: str = OK
    reason: str | None = None
    # GeoJSON dumps of the initial and final partitions, kept only on request
    debug: dict = field(default_factory=dict)

    def solids(self) -> dict[str, Mesh]:
        out = {}
        for lod, mesh in (("1.2", self.lod12), ("1.3", self.lod13), ("2.2", self.lod22)):
            if mesh is not None:
                out[lod] = mesh
        return out


def _local_offset(poly: Polygon2) -> np.ndarray:
    xmin, ymin, _, _ = poly.bounds()
    return np.array([math.floor(xmin), math.floor(ymin)], dtype=float)


def _failed(fp: FootprintRecord, reason: str, flag: str, validity2d: str = VALID) -> BuildingModel:
    q = QualityAttributes(validity_2d=validity2d, flags={flag})
    return BuildingModel(fp.id, fp.polygon, dict(fp.attributes), quality=q, status=FAILED, reason=reason)


def _lod22(fp_local, roof_cands, roof_pts, regions, ground_h, cfg: ReconstructionConfig, bid, debug):
    """Arrangement, labelling and extrusion; returns the dissolved partition and its solid."""
    lines = extract_lines(regions, roof_cands, cfg.lines)
    segs = regularize_lines(lines, cfg.lines) if lines else []
    segs = refine_step_lines(segs, regions, roof_pts, cfg.lines)
    segs = drop_footprint_aligned(segs, fp_local, cfg.lines)
    part = build_arrangement(fp_local, segs, parent_building=bid)
    part = assign_planes(part, regions, roof_pts, cfg.optimization)
    final = dissolve_edges(part)
    if debug is not None:
        debug["initial"] = part
        debug["final"] = final
    return final, extrude_lod22(final, regions, ground_h)


def _lod13(part: RoofPartition, roof_pts, ground_h, cfg: ReconstructionConfig, bid, fallback_h):
    owner = face_point_index(part, roof_pts[:, :2])
    zlists = [roof_pts[owner == i, 2] for i in range(len(part.faces))]
    merged = merge_parts_lod13(zlists, part.adjacency, cfg.lod.lod13_threshold, cfg.lod.roof_percentile)
    nodata = any(len(z) == 0 for z in merged.zlists)
    heights = [fallback_h if h is None else h for h in merged.heights]
    faces, owners = lod13_partition(part, merged)
    mesh = extrude_lod13(part.vertices, faces, [heights[o] for o in owners], ground_h)
    parts = []
    for face, o in zip(faces, owners):
        rings = [part.vertices[r] for r in face]
        poly = Polygon2(rings[0], tuple(rings[1:]))
        z = merged.zlists[o]
        parts.append(RoofPart(poly, reference_heights(z) if len(z) else None, float(heights[o]), bid))
    return mesh, parts, nodata


def reconstruct_building(fp: FootprintRecord, points, config: ReconstructionConfig | PipelineConfig | None = None,
                         keep_debug: bool = False) -> BuildingModel:
    """Reconstruct all LoDs of one building, downgrading instead of failing.

    ``points`` is either the full :class:`PointCloud` (cropped here) or an
    already cropped :class:`BuildingPoints`.  Only an invalid footprint, or an
    unexpected crash, yields a record without geometry.
    """
    if config is None:
        config = ReconstructionConfig()
    cfg = getattr(config, "recon", config)
    v2d = validity_2d(fp.polygon)
    if v2d != VALID:
        return _failed(fp, f"invalid footprint: {v2d}", INVALID_FOOTPRINT, v2d)
    try:
        return _reconstruct(fp, points, cfg, keep_debug)
    except Exception as exc:  # crash containment: one building never aborts a batch
        logger.exception("building %s failed", fp.id)
        return _failed(fp, f"{type(exc).__name__}: {exc}", STAGE_FAILURE)


def _reconstruct(fp: FootprintRecord, points, cfg: ReconstructionConfig, keep_debug: bool) -> BuildingModel:
    bp = points if isinstance(points, BuildingPoints) else crop_points(fp, points, cfg.lod.ground_buffer)
    offset = _local_offset(fp.polygon)
    shift = np.array([offset[0], offset[1], 0.0])
    fp_local = fp.polygon.translated(-offset)
    cands = np.asarray(bp.roof_candidates, dtype=float).reshape(-1, 3) - shift
    ground = np.asarray(bp.ground, dtype=float).reshape(-1, 3)

    model = BuildingModel(fp.id, fp.polygon, dict(fp.attributes))
    q = model.quality
    q.validity_2d = VALID
    flags = q.flags

    if len(cands) == 0:
        flags.update((NO_ROOF_POINTS, NO_DATA))
        model.status = FLAGGED
        model.reason = "no roof points"
        q.validity_3d = {lod: NO_GEOMETRY for lod in ("1.2", "1.3", "2.2")}
        try:
            model.ground_h = ground_height(ground, cfg.lod.ground_percentile)
        except NoGroundPoints:
            flags.add(NO_GROUND_POINTS)
        return model

    regions = classify_regions(detect_planes(cands, cfg.detection), cfg.detection.wall_angle_min)
    wall_members = [r.member_indices for r in regions if r.kind == RegionKind.WALL]
    keep = np.ones(len(cands), dtype=bool)
    for idx in wall_members:
        keep[idx] = False
    roof_pts = cands[keep] if keep.any() else cands
    roofs = roof_regions(regions)

    try:
        ground_h = ground_height(ground, cfg.lod.ground_percentile)
    except NoGroundPoints:
        flags.add(NO_GROUND_POINTS)
        ground_h = fallback_ground_height(roof_pts[:, 2])
    model.ground_h = float(ground_h)
    model.heights = reference_heights(roof_pts[:, 2])
    q.n_roof_points, q.nodata_fraction = coverage_stats(fp_local, roof_pts)

    lod12 = extrude_lod12(fp_local, roof_pts[:, 2], ground_h, cfg.lod.roof_percentile)
    building_h = percentile(roof_pts[:, 2], cfg.lod.roof_percentile)

    lod13 = lod22 = None
    parts: list[RoofPart] = []
    if not roofs:
        flags.add(NO_ROOF_PLANES)
    else:
        debug = {} if keep_debug else None
        final = None
        try:
            final, lod22 = _lod22(fp_local, cands, roof_pts, roofs, ground_h, cfg, fp.id, debug)
        except Exception as exc:
            logger.info("building %s: LoD2.2 failed (%s), using LoD1.3 geometry", fp.id, exc)
            flags.add(FALLBACK_LOD)
            flags.add(NON_VERTICALIZABLE if isinstance(exc, NonVerticalizablePlane) else STAGE_FAILURE)
            if not isinstance(exc, ReconstructionError):
                model.reason = f"LoD2.2: {type(exc).__name__}: {exc}"
        if final is None:
            # LoD1.3 needs a partition; fall back to the footprint as one part
            coords, faces = polygon_faces(fp_local)
            final = RoofPartition(coords, faces, [0], {}, fp.id)
        try:
            lod13, parts, nodata = _lod13(final, roof_pts, ground_h, cfg, fp.id, building_h)
            if nodata:
                flags.add(NO_DATA)
        except Exception as exc:
            logger.info("building %s: LoD1.3 failed (%s)", fp.id, exc)
            flags.add(FALLBACK_LOD)
            flags.add(STAGE_FAILURE)
            lod13, parts = None, []
        if keep_debug and debug:
            model.debug = {k: v.to_geojson(offset) for k, v in debug.items()}

    # validity gate with the downgrade ladder 2.2 -> 1.3 -> 1.2
    v = {}
    v["1.2"] = validity_3d(lod12)
    if v["1.2"] != VALID:
        flags.add(INVALID_SOLID)
        lod12 = None
    if lod13 is not None:
        v["1.3"] = validity_3d(lod13)
        if v["1.3"] != VALID:
            flags.add(INVALID_SOLID)
            flags.add(FALLBACK_LOD)
            lod13, parts = None, []
    if lod22 is not None:
        v["2.2"] = validity_3d(lod22)
        if v["2.2"] != VALID:
            flags.add(INVALID_SOLID)
            lod22 = None
    if roofs and lod22 is None:
        flags.add(FALLBACK_LOD)
        lod22 = lod13 if lod13 is not None else lod12
    if roofs and lod13 is None:
        lod13 = lod12
        if lod12 is not None:
            parts = [RoofPart(fp_local, model.heights, float(building_h), fp.id)]

    q.validity_3d = {
        "1.2": validity_3d(lod12),
        "1.3": validity_3d(lod13),
        "2.2": validity_3d(lod22),
    }
    if lod22 is not None:
        try:
            q.rmse_lod22, q.max_error_lod22 = rmse_and_max(lod22, roof_pts)
            q.n_uncovered_points = int(np.isnan(vertical_errors(lod22, roof_pts)).sum())
        except ReconstructionError:
            flags.add(NO_COVERED_POINTS)
            q.n_uncovered_points = len(roof_pts)

    model.lod12 = None if lod12 is None else lod12.translated(shift)
    model.lod13 = None if lod13 is None else lod13.translated(shift)
    model.lod22 = None if lod22 is None else lod22.translated(shift)
    model.parts = [RoofPart(p.polygon.translated(offset), p.heights, p.height, p.parent_id) for p in parts]
    model.status = FLAGGED if flags else OK
    return model


# --------------------------------------------------------------------------
# batch runs


@dataclass
class RunReport:
    tiles: list[dict] = field(default_factory=list)
    buildings: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def counts(self) -> dict[str, int]:
        out = {OK: 0, FLAGGED: 0, FAILED: 0}
        for b in self.buildings:
            out[b["status"]] += 1
        return out

    def rmse_values(self) -> list[float]:
        return [b["rmse_lod22"] for b in self.buildings if b.get("rmse_lod22") is not None]

    def rmse_histogram(self, width: float = RMSE_BIN) -> dict:
        vals = self.rmse_values()
        if not vals:
            return {"bin_width": width, "counts": []}
        n = int(math.floor(max(vals) / width)) + 1
        counts = [0] * n
        for r in vals:
            counts[min(int(math.floor(r / width)), n - 1)] += 1
        return {"bin_width": width, "counts": counts}

    def to_json(self) -> dict:
        return {
            "n_buildings": len(self.buildings),
            "counts": self.counts,
            "seconds": self.seconds,
            "rmse_histogram": self.rmse_histogram(),
            "tiles": self.tiles,
            "buildings": self.buildings,
            "warnings": self.warnings,
        }


def _building_entry(m: BuildingModel, tile_id: str) -> dict:
    return {
        "id": m.building_id,
        "tile": tile_id,
        "status": m.status,
        "reason": m.reason,
        "flags": sorted(m.quality.flags),
        "rmse_lod22": m.quality.rmse_lod22,
        "validity_3d": dict(m.quality.validity_3d),
    }


def process_tile(tile, footprints, cloud: PointCloud, cfg: ReconstructionConfig, out_dir, keep_debug=False):
    """Reconstruct and export one tile; returns its manifest entry, timing and building entries."""
    from .export import write_tile

    t0 = time.perf_counter()
    models = [reconstruct_building(fp, cloud, cfg, keep_debug=keep_debug) for fp in footprints]
    models.sort(key=lambda m: m.building_id)
    paths = write_tile(models, Path(out_dir) / tile.name, debug=keep_debug)
    dt = time.perf_counter() - t0
    entry = tile.manifest_entry()
    entry["outputs"] = [str(Path(tile.name) / p.name) for p in paths]
    return entry, {"quadkey": tile.id, "n_buildings": len(models), "seconds": dt}, [
        _building_entry(m, tile.id) for m in models
    ]


def _tile_job(args):
    return process_tile(*args)


def run(config: PipelineConfig) -> RunReport:
    """Tile the footprints, reconstruct every building and write all outputs and the report."""
    from .tiling import assign_points_to_tiles, build_quadtree

    t0 = time.perf_counter()
    config.check_paths()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport()
    footprints = read_footprints(config.footprints, report.warnings)
    manifest = []
    if not footprints:
        report.warnings.append("footprint file holds no buildings")
        logger.warning("footprint file holds no buildings")
    else:
        cloud = read_points(config.points, config.class_map)
        tiles = build_quadtree(footprints, config.tiling.max_per_leaf)
        margin = max(4.0, config.recon.lod.ground_buffer)
        assignment = assign_points_to_tiles(tiles, cloud, margin, footprints)
        by_id = {fp.id: fp for fp in footprints}
        jobs = [
            (t, [by_id[b] for b in t.building_ids], cloud.subset(assignment[t.id]), config.recon, out_dir,
             config.debug_partition)
            for t in tiles
        ]
        if config.workers == 1 or len(jobs) == 1:
            results = [_tile_job(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(_tile_job, jobs))
        for entry, timing, buildings in results:
            manifest.append(entry)
            report.tiles.append(timing)
            report.buildings.extend(buildings)
    report.seconds = time.perf_counter() - t0
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump({"tiles": manifest}, f, indent=1)
    with open(out_dir / "report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, indent=1)
    logger.info("%d buildings in %.1f s: %s", len(report.buildings), report.seconds, report.counts)
    return report
