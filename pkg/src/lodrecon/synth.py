"""Synthetic buildings with known roof geometry for testing and benchmarking.

Each building is generated in a local frame, rotated, and placed on a grid
far from the origin (national-grid-like coordinates).  Roofs are sampled on
a jittered grid; ground points surround the footprint.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .geometry import Polygon2, points_in_polygon
from .ingest import PointClass, PointCloud, write_points

KINDS = ("flat", "gable", "hip", "ltower", "noisy")
CLEAN_KINDS = ("flat", "gable", "hip", "ltower")
ORIGIN = (85000.0, 445000.0)
SPACING = 40.0
DENSITY = 8.0  # roof points per m^2
GROUND_RING = 6.0
NOISY_FACTOR = 3.0


def _rect(w, d):
    return np.array([[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]])


def _make_shape(kind: str, rng: np.random.Generator):
    """Local footprint ring, roof height function (local xy -> z above ground) and truth."""
    if kind == "ltower":
        w, d = rng.uniform(12, 18), rng.uniform(10, 14)
        cw, cd = rng.uniform(4, w / 2 - 1), rng.uniform(4, d / 2 - 1)
        ring = np.array(
            [[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2 - cd], [w / 2 - cw, d / 2 - cd],
             [w / 2 - cw, d / 2], [-w / 2, d / 2]]
        )
        h1 = rng.uniform(3, 7)
        h2 = h1 + rng.uniform(4, 8)
        ts = rng.uniform(4, 5.5)
        # tower in the south-west corner, sharing two footprint edges
        x1, y1 = -w / 2 + ts, -d / 2 + ts

        def fn(x, y):
            return np.where((x < x1) & (y < y1), h2, h1)

        return ring, fn, {"planes": 2, "lod13_parts": 2, "eave": h1, "ridge": h2}
    w, d = rng.uniform(9, 16), rng.uniform(7, 11)
    if d > w:
        w, d = d, w
    ring = _rect(w, d)
    h = rng.uniform(3, 8)
    if kind == "flat":
        return ring, (lambda x, y: np.full_like(x, h)), {"planes": 1, "lod13_parts": 1, "eave": h, "ridge": h}
    slope = math.tan(math.radians(rng.uniform(25, 40)))
    if kind == "gable":
        def fn(x, y):
            return h + slope * (d / 2 - np.abs(y))

        return ring, fn, {"planes": 2, "lod13_parts": 1, "eave": h, "ridge": h + slope * d / 2}
    if kind == "hip":
        def fn(x, y):
            return h + slope * np.minimum(d / 2 - np.abs(y), w / 2 - np.abs(x))

        return ring, fn, {"planes": 4, "lod13_parts": 1, "eave": h, "ridge": h + slope * d / 2}
    raise ValueError(f"unknown kind {kind!r}")


def _jittered_grid(poly: Polygon2, density: float, rng) -> np.ndarray:
    step = 1.0 / math.sqrt(density)
    xmin, ymin, xmax, ymax = poly.bounds()
    xs = np.arange(xmin + step / 2, xmax, step)
    ys = np.arange(ymin + step / 2, ymax, step)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.c_[gx.ravel(), gy.ravel()] + rng.uniform(-step / 2, step / 2, size=(gx.size, 2))
    return pts[points_in_polygon(pts, poly, boundary_eps=-1.0)]


def generate_building(idx: int, kind: str, rng: np.random.Generator, sigma: float = 0.05,
                      origin=ORIGIN, spacing: float = SPACING, per_row: int = 25):
    """One building: footprint, labelled points and ground-truth record."""
    shape_kind = "gable" if kind == "noisy" else kind
    ring, fn, truth = _make_shape(shape_kind, rng)
    theta = rng.uniform(0, math.pi)
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    centre = np.array([origin[0] + (idx % per_row) * spacing, origin[1] + (idx // per_row) * spacing])
    ground_z = float(rng.uniform(0, 2))
    world_ring = ring @ R.T + centre
    fp = Polygon2.from_coords(world_ring)
    sig = sigma * (NOISY_FACTOR if kind == "noisy" else 1.0)

    xy = _jittered_grid(fp, DENSITY, rng)
    local = (xy - centre) @ R
    z = ground_z + fn(local[:, 0], local[:, 1]) + rng.normal(0, sig, len(xy))
    roof = np.c_[xy, z]

    big = Polygon2.from_coords(_rect(np.ptp(ring[:, 0]) + 2 * GROUND_RING, np.ptp(ring[:, 1]) + 2 * GROUND_RING) @ R.T + centre)
    gxy = _jittered_grid(big, 1.0, rng)
    gxy = gxy[~points_in_polygon(gxy, fp)]
    ground = np.c_[gxy, ground_z + rng.normal(0, sig, len(gxy))]

    bid = f"b{idx:05d}"
    truth = dict(truth, id=bid, kind=kind, ground_z=ground_z, sigma=sig, rotation=theta,
                 eave=ground_z + truth["eave"], ridge=ground_z + truth["ridge"])
    return fp, roof, ground, truth


def generate_corpus(n: int, seed: int = 0, kinds=KINDS, sigma: float = 0.05):
    """``n`` buildings cycling through ``kinds``; returns (footprints, cloud, truths)."""
    rng = np.random.default_rng(seed)
    fps, roofs, grounds, truths = [], [], [], []
    for i in range(n):
        fp, roof, ground, truth = generate_building(i, kinds[i % len(kinds)], rng, sigma)
        fps.append((truth["id"], fp))
        roofs.append(roof)
        grounds.append(ground)
        truths.append(truth)
    roof = np.vstack(roofs) if roofs else np.zeros((0, 3))
    ground = np.vstack(grounds) if grounds else np.zeros((0, 3))
    xyz = np.vstack([roof, ground])
    cls = np.r_[np.full(len(roof), PointClass.BUILDING), np.full(len(ground), PointClass.GROUND)].astype(np.int8)
    return fps, PointCloud(xyz, cls), truths


def footprints_geojson(fps) -> dict:
    feats = [{"type": "Feature", "properties": {"id": bid}, "geometry": poly.to_geojson()} for bid, poly in fps]
    return {"type": "FeatureCollection", "features": feats}


def write_corpus(out_dir, n: int, seed: int = 0, kinds=KINDS, sigma: float = 0.05) -> dict[str, Path]:
    """Write footprints.geojson, points.xyzc and truth.json into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fps, cloud, truths = generate_corpus(n, seed, kinds, sigma)
    paths = {
        "footprints": out_dir / "footprints.geojson",
        "points": out_dir / "points.xyzc",
        "truth": out_dir / "truth.json",
    }
    with open(paths["footprints"], "w", encoding="utf-8") as f:
        json.dump(footprints_geojson(fps), f)
    write_points(paths["points"], cloud)
    with open(paths["truth"], "w", encoding="utf-8") as f:
        json.dump({"seed": seed, "sigma": sigma, "buildings": truths}, f, indent=1)
    return paths
