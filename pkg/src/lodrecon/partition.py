"""Roof partition: footprint arrangement, plane labelling and face dissolution.

The partition is kept topological: faces are rings of shared vertex ids so
that extrusion can produce watertight solids without T-junctions.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidFootprint, NoRoofRegions
from .geometry import EPS_COORD, Polygon2, points_in_polygon, segment_distances, signed_area
from .quality import VALID, validity_2d

logger = logging.getLogger(__name__)

UNASSIGNED = -1
SNAP = 1e-6
#: exhaustive search is used while labels ** faces stays within this bound
EXHAUSTIVE_LIMIT = 4096
ICM_MAX_SWEEPS = 100
DATA_COST_CAP = 1.0


@dataclass(frozen=True)
class EnergyConfig:
    lam: float = 1.0
    # constant cost of a point-less face; identical for every label so it never
    # changes the argmin, pointless faces are labelled through smoothness alone
    unassigned_penalty: float = 0.0
    solver: str = "auto"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.solver not in ("auto", "exhaustive", "icm"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass(eq=False)
class RoofPartition:
    vertices: np.ndarray
    faces: list[list[list[int]]]
    labels: list[int]
    adjacency: dict[tuple[int, int], float] = field(default_factory=dict)
    parent_building: str = ""

    def polygon(self, i: int) -> Polygon2:
        rings = self.faces[i]
        return Polygon2(self.vertices[rings[0]], tuple(self.vertices[r] for r in rings[1:]))

    @property
    def polygons(self) -> list[Polygon2]:
        return [self.polygon(i) for i in range(len(self.faces))]

    def face_area(self, i: int) -> float:
        rings = self.faces[i]
        return signed_area(self.vertices[rings[0]]) + sum(signed_area(self.vertices[r]) for r in rings[1:])

    def total_area(self) -> float:
        return sum(self.face_area(i) for i in range(len(self.faces)))

    def neighbors(self, i: int) -> dict[int, float]:
        out = {}
        for (a, b), length in self.adjacency.items():
            if a == i:
                out[b] = length
            elif b == i:
                out[a] = length
        return out

    def with_labels(self, labels) -> "RoofPartition":
        return RoofPartition(self.vertices, self.faces, [int(x) for x in labels], dict(self.adjacency), self.parent_building)

    def to_geojson(self, offset=(0.0, 0.0)) -> dict:
        feats = []
        for i in range(len(self.faces)):
            geom = self.polygon(i).translated(offset).to_geojson()
            feats.append(
                {
                    "type": "Feature",
                    "properties": {"face": i, "label": self.labels[i], "building": self.parent_building},
                    "geometry": geom,
                }
            )
        return {"type": "FeatureCollection", "features": feats}


# --------------------------------------------------------------------------
# arrangement


class _VertexRegistry:
    """Merges points closer than ``snap`` into one vertex id."""

    def __init__(self, snap: float):
        self.snap = snap
        self.coords: list[tuple[float, float]] = []
        self.grid: dict[tuple[int, int], list[int]] = defaultdict(list)

    def add(self, p) -> int:
        x, y = float(p[0]), float(p[1])
        cx, cy = math.floor(x / self.snap), math.floor(y / self.snap)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for vid in self.grid.get((cx + dx, cy + dy), ()):
                    vx, vy = self.coords[vid]
                    if math.hypot(vx - x, vy - y) <= self.snap:
                        return vid
        vid = len(self.coords)
        self.coords.append((x, y))
        self.grid[(cx, cy)].append(vid)
        return vid


def _cross(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _line_ring_params(p0, u, ring) -> list[float]:
    ts = []
    n = len(ring)
    for k in range(n):
        a = ring[k]
        b = ring[(k + 1) % n]
        w = b - a
        den = _cross(u, w)
        if abs(den) < 1e-15:
            continue
        qp = a - p0
        t = _cross(qp, w) / den
        s = _cross(qp, u) / den
        if -1e-12 <= s <= 1 + 1e-12:
            ts.append(t)
    return sorted(ts)


def _strictly_inside(pt, poly: Polygon2, eps: float) -> bool:
    p = np.asarray(pt, dtype=float)[None, :]
    if not points_in_polygon(p, poly, boundary_eps=-1.0)[0]:
        return False
    return bool(segment_distances(p, poly.segments())[0] > eps)


def _inside_intervals(p0, u, ts, test) -> list[tuple[float, float]]:
    out = []
    for t0, t1 in zip(ts[:-1], ts[1:]):
        if t1 - t0 <= SNAP:
            continue
        if test(p0 + 0.5 * (t0 + t1) * u):
            if out and t0 - out[-1][1] <= SNAP:
                out[-1] = (out[-1][0], t1)
            else:
                out.append((t0, t1))
    return out


def chord_pieces(footprint: Polygon2, seg) -> list[tuple[np.ndarray, np.ndarray]]:
    """Extend ``seg`` until it exits the footprint exterior, minus hole interiors."""
    a = np.asarray(seg.a, dtype=float)
    b = np.asarray(seg.b, dtype=float)
    length = float(np.hypot(*(b - a)))
    u = (b - a) / length
    ext_only = Polygon2(footprint.exterior)
    ts = _line_ring_params(a, u, footprint.exterior)
    inside = _inside_intervals(a, u, ts, lambda p: _strictly_inside(p, ext_only, EPS_COORD))
    chosen = [(t0, t1) for t0, t1 in inside if t1 > 0.0 + SNAP and t0 < length - SNAP]
    pieces = []
    for t0, t1 in chosen:
        cuts = [t0, t1]
        for h in footprint.holes:
            cuts.extend(t for t in _line_ring_params(a, u, h) if t0 < t < t1)
        cuts = sorted(cuts)
        for s0, s1 in _inside_intervals(a, u, cuts, lambda p: _strictly_inside(p, footprint, EPS_COORD)):
            pieces.append((a + s0 * u, a + s1 * u))
    return pieces


def _segment_hits(p, r, q, w, snap):
    """Parameters along segment P where it meets segment Q (0, 1 or 2 values)."""
    den = _cross(r, w)
    qp = q - p
    lr = math.hypot(*r)
    lw = math.hypot(*w)
    if abs(den) > 1e-12 * lr * lw:
        t = _cross(qp, w) / den
        s = _cross(qp, r) / den
        et, es = snap / lr, snap / lw
        if -et <= t <= 1 + et and -es <= s <= 1 + es:
            return [min(1.0, max(0.0, t))], [min(1.0, max(0.0, s))]
        return [], []
    # parallel: only collinear overlaps matter
    if abs(_cross(qp, r)) / lr > snap:
        return [], []
    ts, ss = [], []
    for tq in (0.0, 1.0):
        t = float((q + tq * w - p) @ r) / (lr * lr)
        if -snap / lr <= t <= 1 + snap / lr:
            ts.append(min(1.0, max(0.0, t)))
    for tp in (0.0, 1.0):
        s = float((p + tp * r - q) @ w) / (lw * lw)
        if -snap / lw <= s <= 1 + snap / lw:
            ss.append(min(1.0, max(0.0, s)))
    return ts, ss


def _trace_cycles(coords: np.ndarray, edges: list[tuple[int, int]]):
    """Face cycles of a planar straight-line graph, each with its face on the left."""
    out = defaultdict(list)
    for u, v in edges:
        out[u].append(v)
        out[v].append(u)
    order = {}
    for u, nbrs in out.items():
        ang = [math.atan2(coords[v][1] - coords[u][1], coords[v][0] - coords[u][0]) for v in nbrs]
        srt = [v for _, v in sorted(zip(ang, nbrs))]
        out[u] = srt
        order[u] = {v: k for k, v in enumerate(srt)}

    def nxt(u, v):
        lst = out[v]
        return v, lst[(order[v][u] - 1) % len(lst)]

    seen = set()
    cycles = []
    for u, v in sorted(edges):
        for he in ((u, v), (v, u)):
            if he in seen:
                continue
            cyc = []
            h = he
            while h not in seen:
                seen.add(h)
                cyc.append(h)
                h = nxt(*h)
            cycles.append(cyc)
    return cycles


def _prune_dangling(edges: set) -> set:
    edges = set(edges)
    while True:
        deg = defaultdict(int)
        for u, v in edges:
            deg[u] += 1
            deg[v] += 1
        drop = {e for e in edges if deg[e[0]] < 2 or deg[e[1]] < 2}
        if not drop:
            return edges
        edges -= drop


def _canonical_ring(ring: list[int]) -> list[int]:
    k = ring.index(min(ring))
    return ring[k:] + ring[:k]


def build_arrangement(footprint: Polygon2, lines, parent_building: str = "", snap: float = SNAP) -> RoofPartition:
    """Subdivide ``footprint`` by the full chords of ``lines``; all faces unassigned."""
    code = validity_2d(footprint)
    if code != VALID:
        raise InvalidFootprint(code)

    # segments: (start, end, ring_tag) where ring_tag marks stored ring direction
    segs = []
    for ri, ring in enumerate(footprint.rings):
        n = len(ring)
        for k in range(n):
            segs.append((ring[k], ring[(k + 1) % n], True))
    for line in lines:
        for s, e in chord_pieces(footprint, line):
            segs.append((s, e, False))

    params: list[list[float]] = [[0.0, 1.0] for _ in segs]
    starts = [np.asarray(s[0], dtype=float) for s in segs]
    dirs = [np.asarray(s[1], dtype=float) - np.asarray(s[0], dtype=float) for s in segs]
    lo = [np.minimum(s[0], s[1]) - snap for s in segs]
    hi = [np.maximum(s[0], s[1]) + snap for s in segs]
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            if (lo[i] > hi[j]).any() or (lo[j] > hi[i]).any():
                continue
            ti, tj = _segment_hits(starts[i], dirs[i], starts[j], dirs[j], snap)
            params[i].extend(ti)
            params[j].extend(tj)

    reg = _VertexRegistry(snap)
    edge_set = set()
    ring_dir = set()
    for k, (s, _, is_ring) in enumerate(segs):
        ids = []
        for t in sorted(set(params[k])):
            vid = reg.add(starts[k] + t * dirs[k])
            if not ids or ids[-1] != vid:
                ids.append(vid)
        for u, v in zip(ids[:-1], ids[1:]):
            if u == v:
                continue
            edge_set.add((min(u, v), max(u, v)))
            if is_ring:
                ring_dir.add((u, v))

    coords = np.asarray(reg.coords, dtype=float)
    edges = sorted(_prune_dangling(edge_set))
    cycles = _trace_cycles(coords, edges)

    def outward(he):
        u, v = he
        return (v, u) in ring_dir and (u, v) not in ring_dir

    exteriors = []
    inner = []
    for cyc in cycles:
        if any(outward(h) for h in cyc):
            continue
        ring = [h[0] for h in cyc]
        area = signed_area(coords[ring])
        if area > 0:
            exteriors.append(_canonical_ring(ring))
        elif area < 0:
            inner.append(_canonical_ring(ring))

    faces = [[r] for r in exteriors]
    for hole in inner:
        best = None
        for fi, face in enumerate(faces):
            poly = Polygon2(coords[face[0]])
            probe = [v for v in hole if v not in set(face[0])]
            if probe and points_in_polygon(coords[probe[:1]], poly)[0]:
                area = signed_area(coords[face[0]])
                if best is None or area < best[0]:
                    best = (area, fi)
        if best is None:
            logger.warning("orphan hole ring in arrangement of %s", parent_building)
            continue
        faces[best[1]].append(hole)

    part = RoofPartition(coords, faces, [UNASSIGNED] * len(faces), {}, parent_building)
    part.adjacency = _adjacency(part)
    return part


def _face_of_halfedges(faces) -> dict[tuple[int, int], int]:
    owner = {}
    for fi, face in enumerate(faces):
        for ring in face:
            n = len(ring)
            for k in range(n):
                owner[(ring[k], ring[(k + 1) % n])] = fi
    return owner


def _adjacency(part: RoofPartition) -> dict[tuple[int, int], float]:
    owner = _face_of_halfedges(part.faces)
    adj: dict[tuple[int, int], float] = defaultdict(float)
    for (u, v), f in owner.items():
        g = owner.get((v, u))
        if g is None or g == f or u > v:
            continue
        length = float(np.hypot(*(part.vertices[u] - part.vertices[v])))
        adj[(min(f, g), max(f, g))] += length
    return dict(sorted(adj.items()))


# --------------------------------------------------------------------------
# labelling


def face_point_index(part: RoofPartition, xy) -> np.ndarray:
    """Face index per point (first face wins on shared boundaries; -1 outside)."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    owner = np.full(len(xy), -1, dtype=np.int64)
    for fi in range(len(part.faces)):
        poly = part.polygon(fi)
        xmin, ymin, xmax, ymax = poly.bounds()
        cand = np.flatnonzero(
            (owner < 0)
            & (xy[:, 0] >= xmin - EPS_COORD)
            & (xy[:, 0] <= xmax + EPS_COORD)
            & (xy[:, 1] >= ymin - EPS_COORD)
            & (xy[:, 1] <= ymax + EPS_COORD)
        )
        if len(cand):
            owner[cand[points_in_polygon(xy[cand], poly)]] = fi
    return owner


def _truncated_cost(pts, plane) -> float:
    if len(pts) == 0:
        return 0.0
    return float(np.minimum(np.abs(plane.signed_distance(pts)), DATA_COST_CAP).sum())


def face_data_cost(face: Polygon2, region, pts) -> float:
    """Sum of truncated point-to-plane distances over points inside ``face``."""
    pts = np.asarray(getattr(pts, "roof_candidates", pts), dtype=float).reshape(-1, 3)
    inside = points_in_polygon(pts[:, :2], face) if len(pts) else np.zeros(0, dtype=bool)
    return _truncated_cost(pts[inside], region.plane)


def data_cost_matrix(part: RoofPartition, regions, pts, owner=None) -> np.ndarray:
    pts = np.asarray(getattr(pts, "roof_candidates", pts), dtype=float).reshape(-1, 3)
    if owner is None:
        owner = face_point_index(part, pts[:, :2])
    D = np.zeros((len(part.faces), len(regions)))
    for fi in range(len(part.faces)):
        sub = pts[owner == fi]
        if len(sub) == 0:
            continue
        for li, r in enumerate(regions):
            D[fi, li] = _truncated_cost(sub, r.plane)
    return D


def _edge_arrays(adjacency):
    if not adjacency:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0)
    pairs = np.array(list(adjacency.keys()), dtype=int)
    lens = np.array(list(adjacency.values()), dtype=float)
    return pairs[:, 0], pairs[:, 1], lens


def labeling_energy(labels, D, adjacency, lam: float) -> float:
    labels = np.asarray(labels)
    fi, gi, lens = _edge_arrays(adjacency)
    data = float(D[np.arange(len(labels)), labels].sum())
    smooth = float(lens[labels[fi] != labels[gi]].sum()) if len(lens) else 0.0
    return data + lam * smooth


def solve_exhaustive(D, adjacency, lam: float) -> np.ndarray:
    """Global minimum by enumeration; lexicographically first labelling wins ties."""
    F, L = D.shape
    if F == 0:
        return np.zeros(0, dtype=int)
    labelings = np.array(list(itertools.product(range(L), repeat=F)), dtype=int)
    fi, gi, lens = _edge_arrays(adjacency)
    energy = D[np.arange(F)[None, :], labelings].sum(axis=1)
    if len(lens):
        energy = energy + lam * ((labelings[:, fi] != labelings[:, gi]) * lens).sum(axis=1)
    return labelings[int(np.argmin(energy))]


def solve_icm(D, adjacency, lam: float, max_sweeps: int = ICM_MAX_SWEEPS) -> np.ndarray:
    """Iterated conditional modes from the per-face data-cost argmin."""
    F, L = D.shape
    labels = np.argmin(D, axis=1) if L else np.zeros(F, dtype=int)
    nbrs: list[list[tuple[int, float]]] = [[] for _ in range(F)]
    for (f, g), length in adjacency.items():
        nbrs[f].append((g, length))
        nbrs[g].append((f, length))
    for _ in range(max_sweeps):
        changed = False
        for f in range(F):
            cost = D[f].copy()
            for g, length in nbrs[f]:
                cost += lam * length
                cost[labels[g]] -= lam * length
            best = int(np.argmin(cost))
            if best != labels[f] and cost[best] < cost[labels[f]]:
                labels[f] = best
                changed = True
        if not changed:
            break
    return labels


def assign_planes(part: RoofPartition, regions, pts, cfg: EnergyConfig = EnergyConfig(), owner=None) -> RoofPartition:
    """Label each face with the index of one region minimising data + lambda * boundary length."""
    if not regions:
        raise NoRoofRegions("no roof regions to assign")
    D = data_cost_matrix(part, regions, pts, owner)
    F, L = D.shape
    solver = cfg.solver
    if solver == "auto":
        solver = "exhaustive" if F * math.log(max(L, 1)) <= math.log(EXHAUSTIVE_LIMIT) + 1e-9 else "icm"
    if solver == "exhaustive":
        labels = solve_exhaustive(D, part.adjacency, cfg.lam)
    else:
        labels = solve_icm(D, part.adjacency, cfg.lam)
    return part.with_labels(labels)


# --------------------------------------------------------------------------
# dissolve


def _chain_rings(coords, halfedges: list[tuple[int, int]]) -> list[list[int]]:
    """Link directed boundary edges into closed rings, turning tightest at shared vertices."""
    out = defaultdict(list)
    for u, v in halfedges:
        out[u].append(v)

    def ang(u, v):
        return math.atan2(coords[v][1] - coords[u][1], coords[v][0] - coords[u][0])

    used = set()
    rings = []
    for start in sorted(halfedges):
        if start in used:
            continue
        ring = []
        h = start
        while h not in used:
            used.add(h)
            ring.append(h[0])
            u, v = h
            cand = [w for w in out[v] if (v, w) not in used]
            if not cand:
                break
            if len(cand) > 1:
                back = ang(v, u)
                cand.sort(key=lambda w: (back - ang(v, w)) % (2 * math.pi) or 2 * math.pi)
            h = (v, cand[0])
        if len(ring) >= 3:
            rings.append(_canonical_ring(ring))
    return rings


def merge_face_rings(coords, faces: list[list[list[int]]]) -> list[list[list[int]]]:
    """Union of edge-connected faces by cancelling opposite half-edges.

    Returns one or more faces (exterior ring first, then holes).  All
    original vertices are kept.
    """
    hes = []
    for face in faces:
        for ring in face:
            n = len(ring)
            hes.extend((ring[k], ring[(k + 1) % n]) for k in range(n))
    hs = set(hes)
    remaining = [h for h in hes if (h[1], h[0]) not in hs]
    rings = _chain_rings(coords, remaining)
    pos = [r for r in rings if signed_area(coords[r]) > 0]
    neg = [r for r in rings if signed_area(coords[r]) <= 0]
    merged = [[r] for r in sorted(pos, key=lambda r: -signed_area(coords[r]))]
    for hole in neg:
        target = 0
        for k, face in enumerate(merged):
            ext = set(face[0])
            probe = [v for v in hole if v not in ext]
            if probe and points_in_polygon(coords[probe[:1]], Polygon2(coords[face[0]]))[0]:
                target = k
                break
        if merged:
            merged[target].append(hole)
    return merged


def dissolve_edges(part: RoofPartition) -> RoofPartition:
    """Merge faces connected through shared edges with equal labels."""
    parent = list(range(len(part.faces)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (f, g) in part.adjacency:
        if part.labels[f] == part.labels[g]:
            rf, rg = find(f), find(g)
            if rf != rg:
                parent[max(rf, rg)] = min(rf, rg)
    groups = defaultdict(list)
    for f in range(len(part.faces)):
        groups[find(f)].append(f)

    faces, labels = [], []
    for root in sorted(groups):
        members = groups[root]
        if len(members) == 1:
            merged = [part.faces[members[0]]]
        else:
            merged = merge_face_rings(part.vertices, [part.faces[m] for m in members])
        for face in merged:
            faces.append(face)
            labels.append(part.labels[root])
    out = RoofPartition(part.vertices, faces, labels, {}, part.parent_building)
    out.adjacency = _adjacency(out)
    return out


def boundary_faces(part: RoofPartition) -> list[list[list[int]]]:
    """Outer boundary of the whole partition as faces (exterior + holes), in partition vertex ids."""
    return merge_face_rings(part.vertices, part.faces)
