"""Per-tile exports: Wavefront OBJ per LoD, a CityJSON subset and 2D GeoJSON tables."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import shapely

from .errors import ParseError
from .geometry import GROUND, ROOF, WALL, Mesh, signed_area

logger = logging.getLogger(__name__)

LODS = ("1.2", "1.3", "2.2")
SEMANTIC_ORDER = (ROOF, WALL, GROUND)
CITYJSON_TYPES = {GROUND: "GroundSurface", ROOF: "RoofSurface", WALL: "WallSurface"}
CITYJSON_SCALE = 0.001


def obj_name(lod: str) -> str:
    return f"lod{lod.replace('.', '')}.obj"


def _models_with(models, lod):
    out = []
    for m in sorted(models, key=lambda m: m.building_id):
        mesh = m.solids().get(lod)
        if mesh is not None:
            out.append((m.building_id, mesh))
    return out


# --------------------------------------------------------------------------
# OBJ


def triangulate_face(vertices: np.ndarray, rings: list[list[int]]) -> list[list[int]]:
    """Split a face with holes into triangles over its own vertices, keeping its orientation."""
    normal = np.zeros(3)
    for r in rings:
        p = vertices[r]
        q = np.roll(p, -1, axis=0)
        normal += np.cross(p, q).sum(axis=0) / 2
    drop = int(np.argmax(np.abs(normal)))
    axes = [a for a in range(3) if a != drop]
    lookup = {}
    for r in rings:
        for v in r:
            lookup[tuple(vertices[v, axes].tolist())] = v
    poly = shapely.Polygon(vertices[rings[0]][:, axes], [vertices[h][:, axes] for h in rings[1:]])
    sign = np.sign(signed_area(vertices[rings[0]][:, axes]))
    tris = []
    for t in shapely.get_parts(shapely.constrained_delaunay_triangles(poly)):
        coords = list(t.exterior.coords)[:3]
        try:
            tri = [lookup[tuple(c)] for c in coords]
        except KeyError as exc:
            raise ValueError("triangulation introduced a new vertex") from exc
        if np.sign(signed_area(vertices[tri][:, axes])) != sign:
            tri.reverse()
        tris.append(tri)
    tris.sort()
    return tris


def export_obj(models, path, lod: str) -> bool:
    """Write one OBJ for ``lod``; returns False (and writes nothing) when no model has that LoD.

    Vertices are shared between faces and buildings when their coordinates
    are identical and are written at full precision in first-use order.
    """
    items = _models_with(models, lod)
    if not items:
        return False
    pool: dict[tuple, int] = {}
    vlines: list[str] = []
    body: list[str] = []
    for bid, mesh in items:
        body.append(f"o {bid}")
        index = []
        for p in mesh.vertices.tolist():
            key = tuple(p)
            if key not in pool:
                pool[key] = len(pool) + 1
                vlines.append(f"v {p[0]!r} {p[1]!r} {p[2]!r}")
            index.append(pool[key])
        for sem in SEMANTIC_ORDER:
            faces = mesh.faces_with(sem)
            if not faces:
                continue
            body.append(f"g {sem}")
            for fi in faces:
                rings = mesh.faces[fi]
                polys = [rings[0]] if len(rings) == 1 else triangulate_face(mesh.vertices, rings)
                for poly in polys:
                    body.append("f " + " ".join(str(index[v]) for v in poly))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(vlines + body) + "\n")
    return True


def parse_obj(path) -> dict[str, Mesh]:
    """Read an OBJ written by :func:`export_obj` back into one mesh per object."""
    verts: list[list[float]] = []
    objects: dict[str, tuple[list, list]] = {}
    current = None
    group = ROOF
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif tag == "o":
                    current = line.strip()[2:].strip()
                    objects[current] = ([], [])
                elif tag == "g":
                    group = parts[1]
                elif tag == "f":
                    if current is None:
                        raise ParseError("face outside an object", lineno)
                    objects[current][0].append([int(p.split("/")[0]) - 1 for p in parts[1:]])
                    objects[current][1].append(group)
            except ValueError as exc:
                raise ParseError(f"bad record: {line.strip()}", lineno) from exc
    V = np.asarray(verts, dtype=float).reshape(-1, 3)
    out = {}
    for name, (faces, sems) in objects.items():
        used = sorted({v for f in faces for v in f})
        remap = {v: i for i, v in enumerate(used)}
        out[name] = Mesh(V[used], [[[remap[v] for v in f]] for f in faces], list(sems))
    return out


# --------------------------------------------------------------------------
# CityJSON


def _solid(mesh: Mesh, lod: str, index) -> dict:
    surfaces = []
    values = []
    types = []
    for fi, rings in enumerate(mesh.faces):
        surfaces.append([[index[v] for v in r] for r in rings])
        t = CITYJSON_TYPES[mesh.semantics[fi]]
        if t not in types:
            types.append(t)
        values.append(types.index(t))
    return {
        "type": "Solid",
        "lod": lod,
        "boundaries": [surfaces],
        "semantics": {"surfaces": [{"type": t} for t in types], "values": [values]},
    }


def _attributes(m) -> dict:
    attrs = dict(m.attributes)
    attrs.update(m.heights.as_properties() if m.heights is not None else dict.fromkeys(("h_min", "h_max", "h_50p", "h_70p")))
    attrs["ground_h"] = m.ground_h
    attrs.update(m.quality.as_properties())
    attrs["status"] = m.status
    return attrs


def export_cityjson_subset(models, path) -> bool:
    """One CityJSON 1.1 file with a Building per model and one Solid per LoD."""
    models = sorted(models, key=lambda m: m.building_id)
    if not models:
        return False
    meshes = [mesh for m in models for mesh in m.solids().values()]
    if meshes:
        translate = np.min(np.vstack([mesh.vertices for mesh in meshes]), axis=0)
    else:
        translate = np.zeros(3)
    pool: dict[tuple, int] = {}
    verts: list[list[int]] = []
    objects = {}
    for m in models:
        geoms = []
        for lod, mesh in m.solids().items():
            index = []
            for p in mesh.vertices.tolist():
                key = tuple(p)
                if key not in pool:
                    pool[key] = len(verts)
                    ints = np.rint((np.asarray(p) - translate) / CITYJSON_SCALE).astype(np.int64)
                    verts.append([int(x) for x in ints])
                index.append(pool[key])
            geoms.append(_solid(mesh, lod, index))
        objects[m.building_id] = {"type": "Building", "attributes": _attributes(m), "geometry": geoms}
    doc = {
        "type": "CityJSON",
        "version": "1.1",
        "transform": {"scale": [CITYJSON_SCALE] * 3, "translate": [float(x) for x in translate]},
        "CityObjects": objects,
        "vertices": verts,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, separators=(",", ":"))
    return True


def decode_cityjson_vertices(doc: dict) -> np.ndarray:
    t = doc["transform"]
    v = np.asarray(doc["vertices"], dtype=float).reshape(-1, 3)
    return v * np.asarray(t["scale"]) + np.asarray(t["translate"])


# --------------------------------------------------------------------------
# 2D tables


def _feature(geom: dict, props: dict) -> dict:
    return {"type": "Feature", "properties": props, "geometry": geom}


def footprint_properties(m) -> dict:
    props = {"id": m.building_id}
    hs = m.heights.as_properties() if m.heights is not None else dict.fromkeys(("h_min", "h_max", "h_50p", "h_70p"))
    props.update(hs)
    props["ground_h"] = m.ground_h
    props.update(m.quality.as_properties())
    return props


def export_2d_tables(models, footprints_path, parts_path) -> None:
    """Footprints with building reference heights, and LoD1.3 roof parts with ``parent_id``."""
    models = sorted(models, key=lambda m: m.building_id)
    fps = [_feature(m.footprint.to_geojson(), footprint_properties(m)) for m in models]
    parts = []
    for m in models:
        for k, p in enumerate(m.parts):
            hs = p.heights.as_properties() if p.heights is not None else dict.fromkeys(("h_min", "h_max", "h_50p", "h_70p"))
            props = {"parent_id": p.parent_id, "part": k, **hs, "height": p.height, "ground_h": m.ground_h}
            parts.append(_feature(p.polygon.to_geojson(), props))
    for path, feats in ((footprints_path, fps), (parts_path, parts)):
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"type": "FeatureCollection", "features": feats}, f)


def write_tile(models, tile_dir, debug: bool = False) -> list[Path]:
    """All exports of one tile into ``tile_dir``; returns the written paths."""
    tile_dir = Path(tile_dir)
    tile_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for lod in LODS:
        p = tile_dir / obj_name(lod)
        if export_obj(models, p, lod):
            written.append(p)
    p = tile_dir / "tile.city.json"
    if export_cityjson_subset(models, p):
        written.append(p)
    fp_path, parts_path = tile_dir / "footprints.geojson", tile_dir / "roofparts.geojson"
    export_2d_tables(models, fp_path, parts_path)
    written += [fp_path, parts_path]
    if debug:
        ddir = tile_dir / "debug"
        for m in sorted(models, key=lambda m: m.building_id):
            for stage, gj in sorted(m.debug.items()):
                ddir.mkdir(exist_ok=True)
                with open(ddir / f"{m.building_id}_{stage}.geojson", "w", encoding="utf-8") as f:
                    json.dump(gj, f)
    return written
