"""Roof plane detection by region growing over k-nearest-neighbour graphs."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInput
from .geometry import Plane, canonical_normal, fit_plane


class RegionKind(str, Enum):
    ROOF = "Roof"
    WALL = "Wall"


@dataclass(frozen=True)
class DetectConfig:
    min_points: int = 15
    dist_epsilon: float = 0.15
    normal_angle_max: float = 20.0
    k_neighbors: int = 10
    wall_angle_min: float = 75.0

    def __post_init__(self):
        if self.min_points < 3:
            raise ValueError("min_points must be >= 3")
        if not self.dist_epsilon > 0:
            raise ValueError("dist_epsilon must be positive")
        if not 0 < self.normal_angle_max < 90:
            raise ValueError("normal_angle_max must lie in (0, 90)")
        if self.k_neighbors < 3:
            raise ValueError("k_neighbors must be >= 3")
        if not 0 < self.wall_angle_min < 90:
            raise ValueError("wall_angle_min must lie in (0, 90)")


@dataclass(frozen=True, eq=False)
class PlaneRegion:
    plane: Plane
    member_indices: np.ndarray
    kind: RegionKind = RegionKind.ROOF

    @property
    def size(self) -> int:
        return len(self.member_indices)


@dataclass(eq=False)
class LocalGeometry:
    normals: np.ndarray
    residuals: np.ndarray
    neighbors: np.ndarray
    centroids: np.ndarray
    degenerate: np.ndarray


def local_geometry(points, k: int) -> LocalGeometry:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n < k + 1:
        raise DegenerateInput(f"need at least {k + 1} points for k={k}, got {n}")
    origin = pts.mean(axis=0)
    local = pts - origin
    _, nbrs = cKDTree(local).query(local, k=k + 1)
    nbrs = np.asarray(nbrs).reshape(n, k + 1)
    hood = local[nbrs]
    centroids = hood.mean(axis=1)
    d = hood - centroids[:, None, :]
    cov = np.einsum("nki,nkj->nij", d, d) / (k + 1)
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0]
    flip = normals[:, 2] < 0
    normals[flip] *= -1
    horiz = np.abs(normals[:, 2]) <= 1e-12
    if horiz.any():
        normals[horiz] = np.array([canonical_normal(v) for v in normals[horiz]])
    scale = np.maximum(evals[:, 2], 1e-300)
    degenerate = evals[:, 1] <= 1e-12 * scale
    return LocalGeometry(normals, np.maximum(evals[:, 0], 0.0), nbrs, centroids + origin, degenerate)


def estimate_normals(points, k: int) -> np.ndarray:
    """Unit normal per point from its ``k`` nearest neighbours plus itself (z >= 0)."""
    return local_geometry(points, k).normals


def _plane_from_sums(count, s1, s2, ref):
    mean = s1 / count
    cov = s2 / count - np.outer(mean, mean)
    _, evecs = np.linalg.eigh(cov)
    normal = evecs[:, 0]
    return normal, float(normal @ (mean + ref))


def _grow(seed, pts, geo, labels, cfg, cos_max):
    ref = pts[seed]
    normal = geo.normals[seed]
    offset = float(normal @ geo.centroids[seed])
    members = [seed]
    in_region = {seed}
    d0 = pts[seed] - ref
    s1 = d0.copy()
    s2 = np.outer(d0, d0)
    next_refit = 3
    queue = deque([seed])
    while queue:
        i = queue.popleft()
        cand = [j for j in geo.neighbors[i] if labels[j] < 0 and j not in in_region]
        if not cand:
            continue
        cand = np.asarray(cand)
        dist = np.abs(pts[cand] @ normal - offset)
        ok = dist <= cfg.dist_epsilon
        cosang = np.abs(geo.normals[cand] @ normal)
        ok &= (cosang >= cos_max) | geo.degenerate[cand]
        for j in cand[ok]:
            j = int(j)
            if j in in_region:
                continue
            in_region.add(j)
            members.append(j)
            dj = pts[j] - ref
            s1 += dj
            s2 += np.outer(dj, dj)
            queue.append(j)
            if len(members) >= next_refit:
                normal, offset = _plane_from_sums(len(members), s1, s2, ref)
                next_refit = len(members) + math.ceil(len(members) / 2)
    return members


def _finalize(members, pts, cfg):
    """Refit on members, dropping those beyond 3 * dist_epsilon until stable."""
    idx = np.sort(np.asarray(members))
    while len(idx) >= cfg.min_points:
        try:
            plane = fit_plane(pts[idx])
        except DegenerateInput:
            return None
        keep = np.abs(plane.signed_distance(pts[idx])) <= 3 * cfg.dist_epsilon
        if keep.all():
            return plane, idx
        idx = idx[keep]
    return None


def detect_planes(points, cfg: DetectConfig = DetectConfig()) -> list[PlaneRegion]:
    """Region growing segmentation of ``points`` into planar regions.

    ``points`` is an ``(n, 3)`` array or an object with a ``roof_candidates``
    attribute.  Member indices refer to rows of that array.
    """
    pts = getattr(points, "roof_candidates", points)
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n < cfg.min_points:
        return []
    k = min(cfg.k_neighbors, n - 1)
    geo = local_geometry(pts, k)
    cos_max = math.cos(math.radians(cfg.normal_angle_max))

    labels = np.full(n, -1, dtype=np.int64)
    order = np.lexsort((np.arange(n), geo.residuals))
    found = []
    for seed in order:
        seed = int(seed)
        if labels[seed] >= 0:
            continue
        members = _grow(seed, pts, geo, labels, cfg, cos_max)
        if len(members) < cfg.min_points:
            continue
        res = _finalize(members, pts, cfg)
        if res is None:
            continue
        plane, idx = res
        labels[idx] = len(found)
        found.append((plane, idx))

    found.sort(key=lambda r: (-len(r[1]), int(r[1][0])))
    regions = [PlaneRegion(plane, idx, _kind(plane, cfg.wall_angle_min)) for plane, idx in found]
    return regions


def _kind(plane: Plane, wall_angle_min: float) -> RegionKind:
    return RegionKind.WALL if plane.angle_to_vertical() > wall_angle_min else RegionKind.ROOF


def classify_regions(regions, wall_angle_min: float = 75.0) -> list[PlaneRegion]:
    """Tag each region Roof or Wall by the tilt of its normal from +z."""
    return [PlaneRegion(r.plane, r.member_indices, _kind(r.plane, wall_angle_min)) for r in regions]


def roof_regions(regions) -> list[PlaneRegion]:
    return [r for r in regions if r.kind == RegionKind.ROOF]
