"""Reading footprints and classified points, and cropping points per building."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import DuplicateId, ParseError, UnsupportedGeometry
from .geometry import Polygon2, distances_point_polygon, points_in_polygon

logger = logging.getLogger(__name__)

GROUND_BUFFER = 4.0

#: LAS convention: 2 = ground, 6 = building
DEFAULT_CLASS_MAP = {"ground": 2, "building": 6}


class PointClass(IntEnum):
    OTHER = 0
    GROUND = 1
    BUILDING = 2


@dataclass(frozen=True, eq=False)
class FootprintRecord:
    id: str
    polygon: Polygon2
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass(eq=False)
class PointCloud:
    """Column store of point records: ``xyz`` is ``(n, 3)``, ``cls`` holds :class:`PointClass` codes."""

    xyz: np.ndarray
    cls: np.ndarray

    def __len__(self):
        return len(self.xyz)

    def subset(self, mask) -> "PointCloud":
        return PointCloud(self.xyz[mask], self.cls[mask])

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int8))


@dataclass(eq=False)
class BuildingPoints:
    building_id: str
    roof_candidates: np.ndarray
    ground: np.ndarray


def read_footprints(path, warnings: list | None = None) -> list[FootprintRecord]:
    """Read a GeoJSON FeatureCollection of Polygon features.

    Each feature needs an ``id`` property (the feature-level ``id`` member is
    used as a fallback).  Non-polygon features are skipped with a warning and
    recorded in ``warnings`` when a list is passed in.
    """
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError(f"{path}: not a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise ParseError(f"{path}: 'features' must be a list")

    records = []
    seen = set()
    for k, feat in enumerate(features):
        try:
            rec = _parse_feature(feat, k)
        except UnsupportedGeometry as exc:
            logger.warning("skipping feature %d: %s", k, exc)
            if warnings is not None:
                warnings.append(str(exc))
            continue
        if rec.id in seen:
            raise DuplicateId(f"duplicate footprint id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def _parse_feature(feat, k) -> FootprintRecord:
    if not isinstance(feat, dict) or feat.get("type") != "Feature":
        raise ParseError(f"feature {k} is not a GeoJSON Feature")
    props = feat.get("properties") or {}
    fid = props.get("id", feat.get("id"))
    if fid is None or str(fid) == "":
        raise ParseError(f"feature {k} has no 'id' property")
    fid = str(fid)
    geom = feat.get("geometry")
    if not isinstance(geom, dict):
        raise UnsupportedGeometry(f"feature {fid!r} has no geometry")
    if geom.get("type") != "Polygon":
        raise UnsupportedGeometry(f"feature {fid!r} has geometry type {geom.get('type')!r}")
    coords = geom.get("coordinates")
    try:
        rings = [np.asarray(r, dtype=float)[:, :2] for r in coords]
    except (TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"feature {fid!r}: malformed coordinates") from exc
    if not rings or any(r.ndim != 2 for r in rings):
        raise ParseError(f"feature {fid!r}: malformed coordinates")
    if not all(np.isfinite(r).all() for r in rings):
        raise ParseError(f"feature {fid!r}: non-finite coordinates")
    attrs = {str(key): str(v) for key, v in props.items() if key != "id"}
    return FootprintRecord(fid, Polygon2.from_coords(rings[0], rings[1:]), attrs)


def read_points(path, class_map: dict[str, int] | None = None) -> PointCloud:
    """Read ASCII ``x y z c`` lines; ``#`` starts a comment line."""
    cmap = {**DEFAULT_CLASS_MAP, **(class_map or {})}
    xyz = []
    codes = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields, got {len(parts)}", lineno)
            try:
                x, y, z = float(parts[0]), float(parts[1]), float(parts[2])
                c = int(parts[3])
            except ValueError as exc:
                raise ParseError(f"cannot parse {s!r}", lineno) from exc
            if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
                raise ParseError("non-finite coordinate", lineno)
            xyz.append((x, y, z))
            codes.append(c)
    codes = np.asarray(codes, dtype=np.int64)
    cls = np.full(len(codes), PointClass.OTHER, dtype=np.int8)
    cls[codes == cmap["ground"]] = PointClass.GROUND
    cls[codes == cmap["building"]] = PointClass.BUILDING
    return PointCloud(np.asarray(xyz, dtype=float).reshape(-1, 3), cls)


def write_points(path, cloud: PointCloud, class_map: dict[str, int] | None = None) -> None:
    cmap = {**DEFAULT_CLASS_MAP, **(class_map or {})}
    codes = np.full(len(cloud), 1, dtype=np.int64)
    codes[cloud.cls == PointClass.GROUND] = cmap["ground"]
    codes[cloud.cls == PointClass.BUILDING] = cmap["building"]
    with open(path, "w", encoding="utf-8") as f:
        f.write("# x y z class\n")
        for (x, y, z), c in zip(cloud.xyz.tolist(), codes.tolist()):
            f.write(f"{x!r} {y!r} {z!r} {c}\n")


def crop_points(fp: FootprintRecord, points: PointCloud, buffer: float = GROUND_BUFFER) -> BuildingPoints:
    """Select roof candidates inside the footprint and ground points within ``buffer``."""
    xmin, ymin, xmax, ymax = fp.polygon.bounds()
    xy = points.xyz[:, :2]
    near = (
        (xy[:, 0] >= xmin - buffer)
        & (xy[:, 0] <= xmax + buffer)
        & (xy[:, 1] >= ymin - buffer)
        & (xy[:, 1] <= ymax + buffer)
    )
    idx = np.flatnonzero(near)
    cls = points.cls[idx]

    b_idx = idx[cls == PointClass.BUILDING]
    roof = b_idx[points_in_polygon(xy[b_idx], fp.polygon)] if len(b_idx) else b_idx

    g_idx = idx[cls == PointClass.GROUND]
    ground = g_idx[distances_point_polygon(xy[g_idx], fp.polygon) <= buffer] if len(g_idx) else g_idx

    return BuildingPoints(fp.id, points.xyz[roof], points.xyz[ground])
