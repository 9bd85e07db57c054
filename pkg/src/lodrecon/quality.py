"""Per-building quality attributes and 2D/3D validity codes."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import NoCoveredPoints
from .geometry import (
    EPS_COORD,
    EPS_PLANAR,
    ROOF,
    Mesh,
    Polygon2,
    points_in_polygon,
    segments_intersect,
    signed_area,
)

VALID = "VALID"
# 2D codes
RING_TOO_SMALL = "RING_TOO_SMALL"
SELF_INTERSECTION = "SELF_INTERSECTION"
HOLE_OUTSIDE_EXTERIOR = "HOLE_OUTSIDE_EXTERIOR"
WRONG_ORIENTATION = "WRONG_ORIENTATION"
# 3D codes
NOT_CLOSED = "NOT_CLOSED"
INCONSISTENT_ORIENTATION = "INCONSISTENT_ORIENTATION"
NON_PLANAR_FACE = "NON_PLANAR_FACE"
NEGATIVE_VOLUME = "NEGATIVE_VOLUME"
EULER_VIOLATION = "EULER_VIOLATION"
NO_GEOMETRY = "NO_GEOMETRY"

# flags
NO_GROUND_POINTS = "NoGroundPoints"
NO_DATA = "NoData"
FALLBACK_LOD = "FallbackLoD"
NO_ROOF_PLANES = "NoRoofPlanes"
NO_ROOF_POINTS = "NoRoofPoints"
NO_COVERED_POINTS = "NoCoveredPoints"
INVALID_FOOTPRINT = "InvalidFootprint"
NON_VERTICALIZABLE = "NonVerticalizablePlane"
INVALID_SOLID = "InvalidSolid"
STAGE_FAILURE = "StageFailure"


@dataclass
class QualityAttributes:
    n_roof_points: int = 0
    nodata_fraction: float = 1.0
    rmse_lod22: float | None = None
    max_error_lod22: float | None = None
    n_uncovered_points: int = 0
    validity_2d: str = VALID
    validity_3d: dict[str, str] = field(default_factory=dict)
    flags: set[str] = field(default_factory=set)

    def as_properties(self) -> dict:
        props = {
            "n_roof_points": int(self.n_roof_points),
            "nodata_fraction": float(self.nodata_fraction),
            "rmse_lod22": None if self.rmse_lod22 is None else float(self.rmse_lod22),
            "max_error_lod22": None if self.max_error_lod22 is None else float(self.max_error_lod22),
            "n_uncovered_points": int(self.n_uncovered_points),
            "validity_2d": self.validity_2d,
        }
        for lod in ("1.2", "1.3", "2.2"):
            props[f"validity_3d_lod{lod.replace('.', '')}"] = self.validity_3d.get(lod, NO_GEOMETRY)
        props["flags"] = ",".join(sorted(self.flags))
        return props


# --------------------------------------------------------------------------
# 2D


def _ring_edges(ring):
    n = len(ring)
    return [(ring[k], ring[(k + 1) % n]) for k in range(n)]


def _ring_self_intersects(ring) -> bool:
    edges = [(a, b) for a, b in _ring_edges(ring) if math.dist(a, b) > EPS_COORD]
    n = len(edges)
    for i in range(n):
        a1, a2 = edges[i]
        for j in range(i + 1, n):
            b1, b2 = edges[j]
            if j == i + 1 or (i == 0 and j == n - 1):
                # neighbours share a vertex: only a fold-back counts
                shared, p, q = (a2, a1, b2) if j == i + 1 else (a1, a2, b1)
                u = np.subtract(p, shared)
                v = np.subtract(q, shared)
                cross = u[0] * v[1] - u[1] * v[0]
                if abs(cross) <= EPS_COORD * max(1.0, np.linalg.norm(u) * np.linalg.norm(v)) and u @ v > 0:
                    return True
                continue
            if segments_intersect(a1, a2, b1, b2):
                return True
    return False


def _rings_intersect(r1, r2) -> bool:
    for a1, a2 in _ring_edges(r1):
        for b1, b2 in _ring_edges(r2):
            if segments_intersect(a1, a2, b1, b2):
                return True
    return False


def validity_2d(poly: Polygon2) -> str:
    """First failing check of a footprint polygon, or ``VALID``."""
    rings = poly.rings
    for r in rings:
        if len(r) < 3 or len(np.unique(np.round(r / EPS_COORD), axis=0)) < 3:
            return RING_TOO_SMALL
    for r in rings:
        if _ring_self_intersects(r):
            return SELF_INTERSECTION
    for i in range(len(rings)):
        for j in range(i + 1, len(rings)):
            if _rings_intersect(rings[i], rings[j]):
                return SELF_INTERSECTION
    ext = Polygon2(poly.exterior)
    for h in poly.holes:
        if not points_in_polygon(h, ext).all():
            return HOLE_OUTSIDE_EXTERIOR
    if signed_area(poly.exterior) <= 0 or any(signed_area(h) >= 0 for h in poly.holes):
        return WRONG_ORIENTATION
    return VALID


# --------------------------------------------------------------------------
# 3D


def face_plane_deviation(mesh: Mesh, i: int) -> float:
    """Largest distance of a face vertex from the face's Newell plane (inf if degenerate)."""
    a = mesh.face_area_vector(i)
    norm = np.linalg.norm(a)
    if norm <= 1e-15:
        return math.inf
    n = a / norm
    idx = [v for ring in mesh.faces[i] for v in ring]
    pts = mesh.vertices[idx]
    c = pts.mean(axis=0)
    return float(np.max(np.abs((pts - c) @ n)))


def shells(mesh: Mesh) -> list[list[int]]:
    """Face indices grouped into edge-connected components."""
    parent = list(range(len(mesh.faces)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    first = {}
    for a, b, f in mesh.edges():
        key = (min(a, b), max(a, b))
        if key in first:
            ra, rb = find(first[key]), find(f)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        else:
            first[key] = f
    groups = defaultdict(list)
    for f in range(len(mesh.faces)):
        groups[find(f)].append(f)
    return [groups[k] for k in sorted(groups)]


def euler_characteristic(mesh: Mesh, faces: list[int] | None = None) -> int:
    """``V - E + F - H`` over the given faces, ``H`` counting inner rings."""
    if faces is None:
        faces = list(range(len(mesh.faces)))
    verts = set()
    edges = set()
    holes = 0
    for f in faces:
        holes += len(mesh.faces[f]) - 1
        for ring in mesh.faces[f]:
            n = len(ring)
            for k in range(n):
                a, b = ring[k], ring[(k + 1) % n]
                verts.add(a)
                edges.add((min(a, b), max(a, b)))
    return len(verts) - len(edges) + len(faces) - holes


def validity_3d(mesh: Mesh | None, planarity_tol: float = EPS_PLANAR) -> str:
    """First failing check of a solid, or ``VALID``.

    The Euler check accepts ``chi = 2 - 2g`` per shell (genus ``g >= 0``),
    so buildings with courtyards are not rejected.
    """
    if mesh is None or not mesh.faces:
        return NO_GEOMETRY
    directed = Counter()
    undirected = Counter()
    for a, b, _ in mesh.edges():
        directed[(a, b)] += 1
        undirected[(min(a, b), max(a, b))] += 1
    if any(a == b for a, b in directed) or any(c != 2 for c in undirected.values()):
        return NOT_CLOSED
    if any(c > 1 for c in directed.values()):
        return INCONSISTENT_ORIENTATION
    for i in range(len(mesh.faces)):
        if face_plane_deviation(mesh, i) > planarity_tol:
            return NON_PLANAR_FACE
    if mesh.signed_volume() <= 0:
        return NEGATIVE_VOLUME
    for shell in shells(mesh):
        chi = euler_characteristic(mesh, shell)
        if chi > 2 or chi % 2:
            return EULER_VIOLATION
    return VALID


# --------------------------------------------------------------------------
# point-to-model errors


def vertical_errors(mesh: Mesh, points) -> np.ndarray:
    """``|z_point - z_roof|`` against the highest roof face above each point; NaN when uncovered."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    best = np.full(len(pts), -np.inf)
    for fi in mesh.faces_with(ROOF):
        a = mesh.face_area_vector(fi)
        if abs(a[2]) <= 1e-12 * max(np.linalg.norm(a), 1e-300):
            continue
        rings = mesh.faces[fi]
        poly = Polygon2(mesh.vertices[rings[0], :2], tuple(mesh.vertices[r, :2] for r in rings[1:]))
        if a[2] < 0:
            poly = Polygon2(poly.exterior[::-1], tuple(h[::-1] for h in poly.holes))
        inside = points_in_polygon(pts[:, :2], poly)
        if not inside.any():
            continue
        p0 = mesh.vertices[rings[0][0]]
        n = a / np.linalg.norm(a)
        sub = pts[inside]
        z = p0[2] - (n[0] * (sub[:, 0] - p0[0]) + n[1] * (sub[:, 1] - p0[1])) / n[2]
        idx = np.flatnonzero(inside)
        best[idx] = np.maximum(best[idx], z)
    err = np.abs(pts[:, 2] - best)
    err[~np.isfinite(best)] = np.nan
    return err


def rmse_and_max(mesh: Mesh, roof_points) -> tuple[float, float]:
    """RMSE and maximum of vertical point-to-roof errors over covered points."""
    err = vertical_errors(mesh, roof_points)
    err = err[np.isfinite(err)]
    if len(err) == 0:
        raise NoCoveredPoints("no point lies under a roof face")
    return float(math.sqrt(float(np.mean(err**2)))), float(err.max())


def coverage_stats(fp: Polygon2, roof_points, cell: float = 1.0) -> tuple[int, float]:
    """Point count and fraction of 1 m cells (centre inside the footprint) holding no roof point."""
    pts = np.asarray(roof_points, dtype=float).reshape(-1, 3)
    xmin, ymin, xmax, ymax = fp.bounds()
    nx = max(1, int(math.ceil((xmax - xmin) / cell - 1e-9)))
    ny = max(1, int(math.ceil((ymax - ymin) / cell - 1e-9)))
    cx = xmin + (np.arange(nx) + 0.5) * cell
    cy = ymin + (np.arange(ny) + 0.5) * cell
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    centres = np.c_[gx.ravel(), gy.ravel()]
    in_fp = points_in_polygon(centres, fp).reshape(nx, ny)
    total = int(in_fp.sum())
    if total == 0:
        return len(pts), 1.0
    occupied = np.zeros((nx, ny), dtype=bool)
    if len(pts):
        ix = np.floor((pts[:, 0] - xmin) / cell).astype(int)
        iy = np.floor((pts[:, 1] - ymin) / cell).astype(int)
        ok = (ix >= 0) & (iy >= 0) & (ix <= nx) & (iy <= ny)
        ix = np.clip(ix[ok], 0, nx - 1)
        iy = np.clip(iy[ok], 0, ny - 1)
        occupied[ix, iy] = True
    empty = int((in_fp & ~occupied).sum())
    return len(pts), empty / total
