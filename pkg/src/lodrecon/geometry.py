"""Geometric primitives: planes, polygons with holes, segments and meshes.

Point sets are plain ``numpy`` arrays of shape ``(n, 2)`` or ``(n, 3)``;
single points may be any length-2/3 sequence.  Everything here is a pure
function or an immutable value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateInput

#: coordinate equality tolerance (m)
EPS_COORD = 1e-9
#: maximum deviation of a face vertex from the face plane (m)
EPS_PLANAR = 1e-6


def canonical_normal(n) -> np.ndarray:
    """Flip ``n`` so that z >= 0; horizontal normals are made lexicographically positive in (x, y)."""
    n = np.asarray(n, dtype=float)
    if abs(n[2]) > 1e-12:
        return -n if n[2] < 0 else n
    if abs(n[0]) > 1e-12:
        return -n if n[0] < 0 else n
    return -n if n[1] < 0 else n


@dataclass(frozen=True)
class Plane:
    """Oriented plane ``{p : normal . p = offset}`` with ``|normal| = 1`` and ``normal.z >= 0``."""

    normal: tuple[float, float, float]
    offset: float

    @classmethod
    def from_normal_point(cls, normal, point) -> "Plane":
        n = np.asarray(normal, dtype=float)
        n = canonical_normal(n / np.linalg.norm(n))
        return cls(tuple(float(v) for v in n), float(n @ np.asarray(point, dtype=float)))

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.normal)

    def signed_distance(self, pts) -> np.ndarray | float:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.n - self.offset

    def z_at(self, x, y):
        nx, ny, nz = self.normal
        return (self.offset - nx * np.asarray(x) - ny * np.asarray(y)) / nz

    def translated(self, t) -> "Plane":
        t = np.asarray(t, dtype=float)
        if t.shape[0] == 2:
            t = np.append(t, 0.0)
        return Plane(self.normal, float(self.offset + self.n @ t))

    def angle_to_vertical(self) -> float:
        """Angle in degrees between the normal and +z."""
        return math.degrees(math.acos(min(1.0, abs(self.normal[2]))))


def fit_plane(points) -> Plane:
    """Total least squares plane through ``points``.

    Raises :class:`DegenerateInput` for fewer than three points or a
    collinear (rank-deficient) configuration.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise DegenerateInput("need at least 3 points to fit a plane")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(s[0], 1e-300)
    if s[1] <= 1e-9 * scale or s[0] == 0.0:
        raise DegenerateInput("points are collinear")
    return Plane.from_normal_point(vt[2], centroid)


def point_plane_distance(p, pl: Plane) -> float:
    return float(np.asarray(p, dtype=float) @ pl.n - pl.offset)


# --------------------------------------------------------------------------
# polygons


def signed_area(ring) -> float:
    r = np.asarray(ring, dtype=float)
    x, y = r[:, 0], r[:, 1]
    # shift for precision with large coordinates
    x = x - x[0]
    y = y - y[0]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _clean_ring(ring) -> np.ndarray:
    r = np.asarray(ring, dtype=float).reshape(-1, 2)
    if len(r) > 1 and np.allclose(r[0], r[-1], atol=EPS_COORD, rtol=0):
        r = r[:-1]
    return r


@dataclass(frozen=True, eq=False)
class Polygon2:
    """Polygon with an exterior ring (CCW) and zero or more holes (CW).

    Closure is implicit: the first vertex is not repeated at the end.
    """

    exterior: np.ndarray
    holes: tuple[np.ndarray, ...] = field(default_factory=tuple)

    @classmethod
    def from_coords(cls, exterior, holes=(), normalize=True) -> "Polygon2":
        ext = _clean_ring(exterior)
        hs = tuple(_clean_ring(h) for h in holes)
        if normalize:
            if len(ext) >= 3 and signed_area(ext) < 0:
                ext = ext[::-1].copy()
            hs = tuple(h[::-1].copy() if len(h) >= 3 and signed_area(h) > 0 else h for h in hs)
        return cls(ext, hs)

    @property
    def rings(self) -> list[np.ndarray]:
        return [self.exterior, *self.holes]

    @property
    def area(self) -> float:
        return polygon_area(self)

    def bounds(self) -> tuple[float, float, float, float]:
        e = self.exterior
        return float(e[:, 0].min()), float(e[:, 1].min()), float(e[:, 0].max()), float(e[:, 1].max())

    def centroid(self) -> tuple[float, float]:
        """Area centroid of the polygon (holes subtracted)."""
        total = 0.0
        cx = cy = 0.0
        ox, oy = self.exterior[0]
        for ring in self.rings:
            x = ring[:, 0] - ox
            y = ring[:, 1] - oy
            xn, yn = np.roll(x, -1), np.roll(y, -1)
            cross = x * yn - xn * y
            total += cross.sum() / 2.0
            cx += ((x + xn) * cross).sum() / 6.0
            cy += ((y + yn) * cross).sum() / 6.0
        if abs(total) < 1e-15:
            m = self.exterior.mean(axis=0)
            return float(m[0]), float(m[1])
        return float(cx / total + ox), float(cy / total + oy)

    def translated(self, t) -> "Polygon2":
        t = np.asarray(t, dtype=float)[:2]
        return Polygon2(self.exterior + t, tuple(h + t for h in self.holes))

    def segments(self) -> np.ndarray:
        """All ring edges as an ``(m, 2, 2)`` array."""
        segs = [np.stack([r, np.roll(r, -1, axis=0)], axis=1) for r in self.rings if len(r) >= 2]
        return np.concatenate(segs, axis=0) if segs else np.zeros((0, 2, 2))

    def to_geojson(self, ndigits: int | None = None) -> dict:
        def ring_coords(r):
            pts = [[float(x), float(y)] for x, y in r]
            if ndigits is not None:
                pts = [[round(x, ndigits), round(y, ndigits)] for x, y in pts]
            return pts + [pts[0]]

        return {"type": "Polygon", "coordinates": [ring_coords(r) for r in self.rings]}


def polygon_area(poly: Polygon2) -> float:
    return abs(signed_area(poly.exterior)) - sum(abs(signed_area(h)) for h in poly.holes)


def _ring_contains(pts: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Crossing-number test for many points against one ring (boundary unspecified)."""
    px, py = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    x1, y1 = ring[:, 0], ring[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for a, b, c, d in zip(x1, y1, x2, y2):
        if b == d:
            continue
        cond = (b > py) != (d > py)
        if not cond.any():
            continue
        xint = a + (py - b) * (c - a) / (d - b)
        inside ^= cond & (px < xint)
    return inside


def segment_distances(pts, segs) -> np.ndarray:
    """Minimum distance from each point to a set of segments ``(m, 2, 2)``."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    best = np.full(len(pts), np.inf)
    for (ax, ay), (bx, by) in segs:
        dx, dy = bx - ax, by - ay
        ll = dx * dx + dy * dy
        if ll == 0.0:
            t = np.zeros(len(pts))
        else:
            t = np.clip(((pts[:, 0] - ax) * dx + (pts[:, 1] - ay) * dy) / ll, 0.0, 1.0)
        ex = pts[:, 0] - (ax + t * dx)
        ey = pts[:, 1] - (ay + t * dy)
        np.minimum(best, np.hypot(ex, ey), out=best)
    return best


def points_in_polygon(pts, poly: Polygon2, boundary_eps: float = EPS_COORD) -> np.ndarray:
    """Vectorised :func:`point_in_polygon`; boundary points count as inside."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    inside = _ring_contains(pts, poly.exterior)
    for h in poly.holes:
        inside &= ~_ring_contains(pts, h)
    if boundary_eps >= 0:
        # only points near the bbox can be on the boundary
        xmin, ymin, xmax, ymax = poly.bounds()
        near = (
            (pts[:, 0] >= xmin - boundary_eps)
            & (pts[:, 0] <= xmax + boundary_eps)
            & (pts[:, 1] >= ymin - boundary_eps)
            & (pts[:, 1] <= ymax + boundary_eps)
            & ~inside
        )
        if near.any():
            d = segment_distances(pts[near], poly.segments())
            idx = np.flatnonzero(near)
            inside[idx[d <= boundary_eps]] = True
    return inside


def point_in_polygon(p, poly: Polygon2) -> bool:
    return bool(points_in_polygon(np.asarray(p, dtype=float)[None, :2], poly)[0])


def distances_point_polygon(pts, poly: Polygon2) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    d = segment_distances(pts, poly.segments())
    d[points_in_polygon(pts, poly)] = 0.0
    return d


def distance_point_polygon(p, poly: Polygon2) -> float:
    return float(distances_point_polygon(np.asarray(p, dtype=float)[None, :2], poly)[0])


# --------------------------------------------------------------------------
# segments


@dataclass(frozen=True)
class LineSeg2:
    a: tuple[float, float]
    b: tuple[float, float]

    def __post_init__(self):
        if math.dist(self.a, self.b) <= EPS_COORD:
            raise DegenerateInput("zero-length segment")

    @property
    def length(self) -> float:
        return math.dist(self.a, self.b)

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.b, self.a)
        return d / np.linalg.norm(d)


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p, eps=EPS_COORD) -> bool:
    return (
        min(a[0], b[0]) - eps <= p[0] <= max(a[0], b[0]) + eps
        and min(a[1], b[1]) - eps <= p[1] <= max(a[1], b[1]) + eps
    )


def segments_intersect(p1, p2, q1, q2, eps: float = EPS_COORD) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    if abs(d1) <= eps and _on_segment(q1, q2, p1, eps):
        return True
    if abs(d2) <= eps and _on_segment(q1, q2, p2, eps):
        return True
    if abs(d3) <= eps and _on_segment(p1, p2, q1, eps):
        return True
    if abs(d4) <= eps and _on_segment(p1, p2, q2, eps):
        return True
    return False


# --------------------------------------------------------------------------
# meshes

GROUND, ROOF, WALL = "Ground", "Roof", "Wall"


@dataclass(eq=False)
class Mesh:
    """Polygonal surface mesh.

    ``faces[i]`` is a list of rings (exterior first, then holes), each ring a
    list of vertex indices.  Faces are oriented counter-clockwise seen from
    outside the solid.
    """

    vertices: np.ndarray
    faces: list[list[list[int]]]
    semantics: list[str]

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        if len(self.faces) != len(self.semantics):
            raise ValueError("one semantic label per face required")

    def face_area_vector(self, i: int) -> np.ndarray:
        """Newell area vector (normal times area) of face ``i``, holes subtracted."""
        total = np.zeros(3)
        ref = self.vertices[self.faces[i][0][0]]
        for ring in self.faces[i]:
            v = self.vertices[ring] - ref
            w = np.roll(v, -1, axis=0)
            total += 0.5 * np.cross(v, w).sum(axis=0)
        return total

    def signed_volume(self) -> float:
        """Divergence-theorem volume: sum over faces of ``(p_f . A_f) / 3``."""
        origin = self.vertices.mean(axis=0) if len(self.vertices) else np.zeros(3)
        vol = 0.0
        for i, face in enumerate(self.faces):
            p = self.vertices[face[0][0]] - origin
            vol += float(p @ self.face_area_vector(i)) / 3.0
        return vol

    def edges(self):
        """Yield directed edges ``(a, b, face_index)`` of every ring."""
        for fi, face in enumerate(self.faces):
            for ring in face:
                n = len(ring)
                for k in range(n):
                    yield ring[k], ring[(k + 1) % n], fi

    def translated(self, t) -> "Mesh":
        return Mesh(self.vertices + np.asarray(t, dtype=float), [list(map(list, f)) for f in self.faces], list(self.semantics))

    def faces_with(self, semantic: str) -> list[int]:
        return [i for i, s in enumerate(self.semantics) if s == semantic]


def translate_polygon(poly: Polygon2, t: Sequence[float]) -> Polygon2:
    return poly.translated(t)
