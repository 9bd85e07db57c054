"""Reference heights and extrusion of roof partitions into LoD1.2, LoD1.3 and LoD2.2 solids."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import EmptyInput, ExtrusionError, NoGroundPoints, NoRoofPoints, NonVerticalizablePlane
from .geometry import GROUND, ROOF, WALL, Mesh, Plane, Polygon2
from .partition import SNAP, RoofPartition, merge_face_rings

#: heights closer than this at the same 2D vertex share one 3D vertex
Z_MERGE = 1e-6
MIN_NZ = 0.01
LOD13_THRESHOLD = 3.0
GROUND_PERCENTILE = 5
ROOF_PERCENTILE = 70
GROUND_FALLBACK_DROP = 3.0


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: element ``ceil(p/100 * n)`` (1-based) of the sorted values."""
    v = np.asarray(values, dtype=float).ravel()
    n = len(v)
    if n == 0:
        raise EmptyInput("percentile of an empty list")
    if not 0 < p <= 100:
        raise ValueError("p must lie in (0, 100]")
    rank = math.ceil(Fraction(p) * n / 100)
    rank = min(max(rank, 1), n)
    return float(np.partition(v, rank - 1)[rank - 1])


@dataclass(frozen=True)
class ReferenceHeights:
    h_min: float
    h_max: float
    h_p50: float
    h_p70: float

    def as_properties(self) -> dict:
        return {"h_min": self.h_min, "h_max": self.h_max, "h_50p": self.h_p50, "h_70p": self.h_p70}

    def shifted(self, dz: float) -> "ReferenceHeights":
        return ReferenceHeights(self.h_min + dz, self.h_max + dz, self.h_p50 + dz, self.h_p70 + dz)


def reference_heights(zs) -> ReferenceHeights:
    z = np.asarray(zs, dtype=float).ravel()
    if len(z) == 0:
        raise EmptyInput("no points on roof part")
    return ReferenceHeights(float(z.min()), float(z.max()), percentile(z, 50), percentile(z, 70))


def ground_height(bp, percentile_p: float = GROUND_PERCENTILE) -> float:
    """5th percentile of the ground points around the building."""
    g = np.asarray(getattr(bp, "ground", bp), dtype=float).reshape(-1, 3)
    if len(g) == 0:
        raise NoGroundPoints("no ground points within the buffer")
    return percentile(g[:, 2], percentile_p)


def fallback_ground_height(roof_z) -> float:
    return float(np.min(roof_z)) - GROUND_FALLBACK_DROP


# --------------------------------------------------------------------------
# extrusion


def _split_crossings(coords: np.ndarray, faces, zfun):
    """Insert a vertex wherever the lifted edges of two neighbouring faces cross."""
    owner = {}
    for fi, face in enumerate(faces):
        for ring in face:
            n = len(ring)
            for k in range(n):
                owner[(ring[k], ring[(k + 1) % n])] = fi
    new_coords = [tuple(c) for c in coords]
    splits = {}
    for (u, v), f in sorted(owner.items()):
        g = owner.get((v, u))
        if g is None or f > g or (u, v) in splits:
            continue
        du = zfun(f, u) - zfun(g, u)
        dv = zfun(f, v) - zfun(g, v)
        if abs(du) <= Z_MERGE or abs(dv) <= Z_MERGE or (du > 0) == (dv > 0):
            continue
        t = du / (du - dv)
        pu, pv = coords[u], coords[v]
        p = pu + t * (pv - pu)
        if math.dist(p, pu) <= SNAP or math.dist(p, pv) <= SNAP:
            continue
        w = len(new_coords)
        new_coords.append((float(p[0]), float(p[1])))
        splits[(u, v)] = w
        splits[(v, u)] = w
    if not splits:
        return coords, faces
    out = []
    for face in faces:
        rings = []
        for ring in face:
            r = []
            n = len(ring)
            for k in range(n):
                r.append(ring[k])
                w = splits.get((ring[k], ring[(k + 1) % n]))
                if w is not None:
                    r.append(w)
            rings.append(r)
        out.append(rings)
    return np.asarray(new_coords, dtype=float), out


def extrude_faces(coords, faces, planes: list[Plane], ground_h: float, min_height: float = 1e-3) -> Mesh:
    """Lift each 2D face onto its plane and close the solid with walls and a ground face.

    ``faces`` share vertex ids (``coords`` rows).  Walls are emitted only where
    the lifted edges of the two sides differ, so no inner walls appear between
    coincident roof parts.
    """
    coords = np.asarray(coords, dtype=float)
    for pl in planes:
        if abs(pl.normal[2]) < MIN_NZ:
            raise NonVerticalizablePlane("roof plane is near-vertical")

    def zfun(f, v):
        return float(planes[f].z_at(coords[v][0], coords[v][1]))

    coords, faces = _split_crossings(coords, faces, zfun)

    def zfun2(f, v):
        return float(planes[f].z_at(coords[v][0], coords[v][1]))

    vertices: list[tuple[float, float, float]] = []
    at: dict[int, list[tuple[float, int]]] = defaultdict(list)

    def vid(v: int, z: float) -> int:
        for zz, i in at[v]:
            if abs(zz - z) <= Z_MERGE:
                return i
        i = len(vertices)
        vertices.append((float(coords[v][0]), float(coords[v][1]), float(z)))
        at[v].append((z, i))
        return i

    owner = {}
    for fi, face in enumerate(faces):
        for ring in face:
            n = len(ring)
            for k in range(n):
                owner[(ring[k], ring[(k + 1) % n])] = fi

    # register every lifted height before building walls
    roof_faces = []
    for fi, face in enumerate(faces):
        rings = []
        for ring in face:
            r = []
            for v in ring:
                z = zfun2(fi, v)
                if z < ground_h + min_height:
                    raise ExtrusionError(f"roof at {z:.3f} does not clear ground {ground_h:.3f}")
                r.append(vid(v, z))
            rings.append(r)
        roof_faces.append(rings)
    boundary = [(u, v) for (u, v) in owner if (v, u) not in owner]
    for u, v in boundary:
        vid(u, ground_h)
        vid(v, ground_h)

    def between(v: int, z0: float, z1: float) -> list[int]:
        """Vertices on the vertical through ``v`` strictly between z0 and z1, ordered from z0."""
        lo, hi = min(z0, z1), max(z0, z1)
        inner = [(z, i) for z, i in at[v] if lo + Z_MERGE < z < hi - Z_MERGE]
        inner.sort(reverse=z0 > z1)
        return [i for _, i in inner]

    mfaces: list[list[list[int]]] = []
    sem: list[str] = []
    for rings in roof_faces:
        mfaces.append(rings)
        sem.append(ROOF)

    for (u, v), f in sorted(owner.items()):
        g = owner.get((v, u))
        if g is not None and g < f:
            continue
        za_u, za_v = zfun2(f, u), zfun2(f, v)
        zb_u, zb_v = (ground_h, ground_h) if g is None else (zfun2(g, u), zfun2(g, v))
        ring = [vid(u, zb_u), vid(v, zb_v)]
        ring += between(v, zb_v, za_v)
        ring += [vid(v, za_v), vid(u, za_u)]
        ring += between(u, za_u, zb_u)
        clean = [x for k, x in enumerate(ring) if x != ring[k - 1]]
        if len(set(clean)) < 3:
            continue
        mfaces.append([clean])
        sem.append(WALL)

    for face in merge_face_rings(coords, faces):
        mfaces.append([[vid(v, ground_h) for v in reversed(ring)] for ring in face])
        sem.append(GROUND)

    return Mesh(np.asarray(vertices), mfaces, sem)


def extrude_lod22(part: RoofPartition, regions, ground_h: float) -> Mesh:
    """LoD2.2 solid from a labelled, dissolved partition."""
    if any(l < 0 for l in part.labels):
        raise ExtrusionError("partition has unassigned faces")
    planes = [regions[l].plane for l in part.labels]
    return extrude_faces(part.vertices, part.faces, planes, ground_h)


def horizontal(h: float) -> Plane:
    return Plane((0.0, 0.0, 1.0), float(h))


def extrude_prisms(coords, faces, heights, ground_h: float) -> Mesh:
    return extrude_faces(coords, faces, [horizontal(h) for h in heights], ground_h)


def polygon_faces(poly: Polygon2):
    """Vertex array and single-face ring structure of a polygon."""
    coords = np.vstack(poly.rings)
    rings = []
    k = 0
    for r in poly.rings:
        rings.append(list(range(k, k + len(r))))
        k += len(r)
    return coords, [rings]


def extrude_lod12(footprint: Polygon2, all_roof_z, ground_h: float, p: float = ROOF_PERCENTILE) -> Mesh:
    z = np.asarray(all_roof_z, dtype=float).ravel()
    if len(z) == 0:
        raise NoRoofPoints("no roof points for LoD1.2")
    coords, faces = polygon_faces(footprint)
    return extrude_prisms(coords, faces, [percentile(z, p)], ground_h)


# --------------------------------------------------------------------------
# LoD1.3


@dataclass
class MergedParts:
    """Groups of partition faces merged for LoD1.3 and their p70 heights (None = no data)."""

    groups: list[list[int]]
    heights: list[float | None]
    zlists: list[np.ndarray] = field(default_factory=list)


def _inherit(heights: dict[int, float | None], adjacency: dict[tuple[int, int], float]) -> dict[int, float | None]:
    """Fill missing heights from the neighbour with the longest shared edge, repeatedly."""
    out = dict(heights)
    while True:
        changed = False
        for k in sorted(out):
            if out[k] is not None:
                continue
            best = None
            for (a, b), length in adjacency.items():
                other = b if a == k else a if b == k else None
                if other is None or out.get(other) is None:
                    continue
                if best is None or length > best[0] or (length == best[0] and other < best[1]):
                    best = (length, other)
            if best is not None:
                out[k] = out[best[1]]
                changed = True
        if not changed:
            return out


def merge_parts_lod13(
    zlists, adjacency: dict[tuple[int, int], float], threshold: float = LOD13_THRESHOLD, p: float = ROOF_PERCENTILE
) -> MergedParts:
    """Iteratively merge the adjacent pair with the smallest height gap while it is below ``threshold``."""
    members = {i: [i] for i in range(len(zlists))}
    z = {i: np.asarray(zlists[i], dtype=float).ravel() for i in range(len(zlists))}
    adj: dict[tuple[int, int], float] = {}
    for (a, b), length in adjacency.items():
        key = (min(a, b), max(a, b))
        adj[key] = adj.get(key, 0.0) + length

    while True:
        raw = {k: (percentile(z[k], p) if len(z[k]) else None) for k in members}
        h = _inherit(raw, adj)
        best = None
        for (a, b) in sorted(adj):
            if h[a] is None or h[b] is None:
                continue
            gap = abs(h[a] - h[b])
            if best is None or gap < best[0]:
                best = (gap, a, b)
        if best is None or not best[0] < threshold:
            break
        _, a, b = best
        members[a] = sorted(members[a] + members.pop(b))
        z[a] = np.concatenate([z[a], z.pop(b)])
        new_adj: dict[tuple[int, int], float] = {}
        for (x, y), length in adj.items():
            x = a if x == b else x
            y = a if y == b else y
            if x == y:
                continue
            key = (min(x, y), max(x, y))
            new_adj[key] = new_adj.get(key, 0.0) + length
        adj = new_adj

    keys = sorted(members)
    raw = {k: (percentile(z[k], p) if len(z[k]) else None) for k in keys}
    h = _inherit(raw, adj)
    return MergedParts([members[k] for k in keys], [h[k] for k in keys], [z[k] for k in keys])


def lod13_partition(part: RoofPartition, merged: MergedParts):
    """Faces of the LoD1.3 partition (shared vertex ids with ``part``)."""
    faces = []
    owners = []
    for gi, group in enumerate(merged.groups):
        if len(group) == 1:
            fs = [part.faces[group[0]]]
        else:
            fs = merge_face_rings(part.vertices, [part.faces[i] for i in group])
        faces.extend(fs)
        owners.extend([gi] * len(fs))
    return faces, owners


def extrude_lod13(coords, faces, heights, ground_h: float) -> Mesh:
    if any(h is None for h in heights):
        raise NoRoofPoints("LoD1.3 part without height")
    return extrude_prisms(coords, faces, heights, ground_h)
