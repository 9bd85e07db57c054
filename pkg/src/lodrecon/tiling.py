"""Quadtree tiling of footprints into leaves with a bounded number of buildings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_PER_LEAF = 3500
POINT_MARGIN = 4.0
# identical centroids can never be separated; stop splitting here
MAX_DEPTH = 32


@dataclass
class Tile:
    id: str
    bbox: tuple[float, float, float, float]
    building_ids: list[str] = field(default_factory=list)

    @property
    def name(self) -> str:
        return "t" + self.id

    def manifest_entry(self) -> dict:
        return {"quadkey": self.id, "bbox": list(self.bbox), "n_buildings": len(self.building_ids)}


def _centroids(footprints):
    ids = [fp.id for fp in footprints]
    cents = np.array([fp.polygon.centroid() for fp in footprints], dtype=float).reshape(-1, 2)
    return ids, cents


def root_square(cents: np.ndarray) -> tuple[float, float, float, float]:
    lo = cents.min(axis=0)
    hi = cents.max(axis=0)
    side = float(max(hi - lo)) * 1.01
    if side <= 0:
        side = 1.0
    c = (lo + hi) / 2
    h = side / 2
    return (float(c[0] - h), float(c[1] - h), float(c[0] + h), float(c[1] + h))


def build_quadtree(footprints, max_per_leaf: int = MAX_PER_LEAF) -> list[Tile]:
    """Leaves of a point quadtree over footprint centroids, sorted by quadkey.

    Quadrants are numbered SW=0, SE=1, NW=2, NE=3; a centroid on a split line
    goes east/north.  Buildings inside a leaf are sorted by id so the result
    does not depend on input order.
    """
    if not footprints:
        return []
    ids, cents = _centroids(footprints)
    order = np.argsort(np.array(ids, dtype=object), kind="stable")
    ids = [ids[i] for i in order]
    cents = cents[order]

    leaves = []
    stack = [("", root_square(cents), np.arange(len(ids)))]
    while stack:
        key, bbox, idx = stack.pop()
        if len(idx) == 0:
            continue
        if len(idx) <= max_per_leaf or len(key) >= MAX_DEPTH:
            leaves.append(Tile(key, bbox, sorted(ids[i] for i in idx)))
            continue
        x0, y0, x1, y1 = bbox
        mx, my = (x0 + x1) / 2, (y0 + y1) / 2
        east = cents[idx, 0] >= mx
        north = cents[idx, 1] >= my
        quads = {
            "0": (~east & ~north, (x0, y0, mx, my)),
            "1": (east & ~north, (mx, y0, x1, my)),
            "2": (~east & north, (x0, my, mx, y1)),
            "3": (east & north, (mx, my, x1, y1)),
        }
        for q, (mask, qb) in quads.items():
            stack.append((key + q, qb, idx[mask]))
    leaves.sort(key=lambda t: t.id)
    return leaves


def assign_points_to_tiles(tiles, points, margin: float = POINT_MARGIN, footprints=None) -> dict[str, np.ndarray]:
    """Indices of the points falling in each tile's bbox inflated by ``margin``.

    When ``footprints`` are given, each tile's box is first grown to cover
    the bounding boxes of its own buildings, so that buildings straddling a
    tile border keep all their points.
    """
    xyz = getattr(points, "xyz", points)
    xy = np.asarray(xyz, dtype=float)[:, :2]
    by_id = {fp.id: fp for fp in footprints} if footprints is not None else {}
    out = {}
    for t in tiles:
        x0, y0, x1, y1 = t.bbox
        for bid in t.building_ids:
            fp = by_id.get(bid)
            if fp is None:
                continue
            a, b, c, d = fp.polygon.bounds()
            x0, y0, x1, y1 = min(x0, a), min(y0, b), max(x1, c), max(y1, d)
        m = (xy[:, 0] >= x0 - margin) & (xy[:, 0] <= x1 + margin) & (xy[:, 1] >= y0 - margin) & (xy[:, 1] <= y1 + margin)
        out[t.id] = np.flatnonzero(m)
    return out
