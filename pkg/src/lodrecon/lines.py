"""Boundary and intersection lines of roof regions, and their regularisation."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import DegenerateRegion, EmptyInput
from .geometry import LineSeg2, Polygon2, segment_distances, signed_area

MIN_LINE_LENGTH = 0.1


class LineOrigin(str, Enum):
    BOUNDARY = "Boundary"
    INTERSECTION = "Intersection"


@dataclass(frozen=True)
class CandidateLine:
    seg: LineSeg2
    origin: LineOrigin
    source_regions: tuple[int, ...] = ()


@dataclass(frozen=True)
class LineConfig:
    alpha: float = 0.5
    angle_tol: float = 5.0
    dist_tol: float = 0.5
    adjacency_gap: float = 0.75
    # alpha-shape loops enclosing less than this are sampling gaps, not outlines
    min_loop_area: float = 2.0

    def __post_init__(self):
        for name in ("alpha", "angle_tol", "dist_tol", "adjacency_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.min_loop_area < 0:
            raise ValueError("min_loop_area must be >= 0")


# --------------------------------------------------------------------------
# alpha shape


def alpha_shape_loops(xy: np.ndarray, alpha: float) -> list[np.ndarray]:
    """Boundary loops (as index arrays into ``xy``) of the alpha shape.

    A Delaunay triangle is kept when its squared circumradius is at most
    ``alpha``.  Loops run with the shape on their left, so outer loops are
    counter-clockwise and holes clockwise.
    """
    if len(xy) < 3:
        return []
    try:
        tri = Delaunay(xy)
    except QhullError:
        return []
    s = tri.simplices
    a, b, c = xy[s[:, 0]], xy[s[:, 1]], xy[s[:, 2]]
    ab = np.sum((b - a) ** 2, axis=1)
    bc = np.sum((c - b) ** 2, axis=1)
    ca = np.sum((a - c) ** 2, axis=1)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = ab * bc * ca / (4.0 * cross**2)
    keep = np.isfinite(r2) & (r2 <= alpha) & (np.abs(cross) > 1e-12)
    s = s[keep]
    cw = cross[keep] < 0
    s[cw] = s[cw][:, [0, 2, 1]]

    directed = set()
    for i, j, k in s.tolist():
        directed.update(((i, j), (j, k), (k, i)))
    boundary = [(i, j) for (i, j) in directed if (j, i) not in directed]
    if not boundary:
        return []

    out = defaultdict(list)
    for i, j in boundary:
        out[i].append(j)

    def angle(i, j):
        d = xy[j] - xy[i]
        return math.atan2(d[1], d[0])

    used = set()
    loops = []
    for start in sorted(boundary):
        if start in used:
            continue
        loop = []
        e = start
        while e not in used:
            used.add(e)
            loop.append(e[0])
            i, j = e
            nxt = [k for k in out[j] if (j, k) not in used]
            if not nxt:
                break
            if len(nxt) > 1:
                # keep the shape on the left: take the first edge clockwise from the reversed incoming one
                back = angle(j, i)
                nxt.sort(key=lambda k: (back - angle(j, k)) % (2 * math.pi) or 2 * math.pi)
            e = (j, nxt[0])
        if len(loop) >= 3:
            loops.append(np.asarray(loop))
    return loops


def _tls_line(pts):
    c = pts.mean(axis=0)
    if len(pts) < 2:
        return c, np.array([1.0, 0.0])
    _, _, vt = np.linalg.svd(pts - c, full_matrices=False)
    return c, vt[0]


def _max_dev(pts, a, b):
    d = b - a
    ll = math.hypot(*d)
    if ll == 0:
        return float(np.max(np.hypot(*(pts - a).T)))
    return float(np.max(np.abs((pts[:, 0] - a[0]) * d[1] - (pts[:, 1] - a[1]) * d[0]) / ll))


def _douglas_peucker(pts, tol):
    """Indices of retained breakpoints of an open polyline (endpoints included)."""
    keep = {0, len(pts) - 1}
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        seg = pts[i + 1 : j]
        a, b = pts[i], pts[j]
        d = b - a
        ll = math.hypot(*d)
        if ll == 0:
            dev = np.hypot(*(seg - a).T)
        else:
            dev = np.abs((seg[:, 0] - a[0]) * d[1] - (seg[:, 1] - a[1]) * d[0]) / ll
        k = int(np.argmax(dev))
        if dev[k] > tol:
            m = i + 1 + k
            keep.add(m)
            stack.extend([(i, m), (m, j)])
    return sorted(keep)


def _undirected_turn(d1, d2) -> float:
    c = abs(float(d1 @ d2))
    return math.degrees(math.acos(min(1.0, c)))


def straight_runs(loop_pts: np.ndarray, dist_tol: float, angle_tol: float) -> list[np.ndarray]:
    """Split a closed point loop into maximal straight runs."""
    n = len(loop_pts)
    if n < 3:
        return []
    c = loop_pts.mean(axis=0)
    i0 = int(np.argmax(np.sum((loop_pts - c) ** 2, axis=1)))
    pts = np.roll(loop_pts, -i0, axis=0)
    i1 = int(np.argmax(np.sum((pts - pts[0]) ** 2, axis=1)))
    closed = np.vstack([pts, pts[:1]])
    tol = dist_tol / 2.0
    first = _douglas_peucker(closed[: i1 + 1], tol)
    second = [i1 + k for k in _douglas_peucker(closed[i1:], tol)]
    breaks = sorted(set(first) | set(second))
    runs = [list(range(breaks[k], breaks[k + 1] + 1)) for k in range(len(breaks) - 1)]

    def direction(run):
        return _tls_line(closed[run])[1]

    # merge neighbouring runs that continue straight on
    changed = True
    while changed and len(runs) > 1:
        changed = False
        for k in range(len(runs)):
            r1, r2 = runs[k], runs[(k + 1) % len(runs)]
            if _undirected_turn(direction(r1), direction(r2)) > angle_tol:
                continue
            merged = r1 + r2[1:]
            p = closed[merged]
            if _max_dev(p, p[0], p[-1]) > tol:
                continue
            if (k + 1) % len(runs) == 0:
                runs = [merged] + runs[1:-1]
            else:
                runs[k : k + 2] = [merged]
            changed = True
            break
    return [closed[r] for r in runs]


def _segment_from_run(run_pts):
    c, d = _tls_line(run_pts)
    t0 = float((run_pts[0] - c) @ d)
    t1 = float((run_pts[-1] - c) @ d)
    return c + t0 * d, c + t1 * d


def boundary_lines(region, pts, cfg: LineConfig = LineConfig(), region_id: int = 0) -> list[CandidateLine]:
    """Straight boundary lines of the alpha shape of one roof region."""
    pts = np.asarray(getattr(pts, "roof_candidates", pts), dtype=float)
    xy = pts[region.member_indices, :2]
    if abs(region.plane.normal[2]) < 1e-3:
        raise DegenerateRegion("vertical region has no 2D extent")
    xy = np.unique(xy, axis=0)
    if len(xy) < 3:
        raise DegenerateRegion("fewer than 3 distinct projected points")
    origin = xy.mean(axis=0)
    local = xy - origin
    s = np.linalg.svd(local, compute_uv=False)
    if s[1] <= 1e-6 * max(s[0], 1e-300):
        raise DegenerateRegion("projected region is rank-deficient")

    lines = []
    for loop in alpha_shape_loops(local, cfg.alpha):
        lp = local[loop]
        if abs(signed_area(lp)) < cfg.min_loop_area:
            continue
        for run in straight_runs(lp, cfg.dist_tol, cfg.angle_tol):
            a, b = _segment_from_run(run)
            if math.dist(a, b) > MIN_LINE_LENGTH:
                seg = LineSeg2(tuple((a + origin).tolist()), tuple((b + origin).tolist()))
                lines.append(CandidateLine(seg, LineOrigin.BOUNDARY, (region_id,)))
    return lines


def _clip_to_box(p0, d, box):
    """Liang-Barsky clip of the infinite line ``p0 + t d`` to ``box``; returns (t0, t1) or None."""
    xmin, ymin, xmax, ymax = box
    t0, t1 = -math.inf, math.inf
    for p, q in ((-d[0], p0[0] - xmin), (d[0], xmax - p0[0]), (-d[1], p0[1] - ymin), (d[1], ymax - p0[1])):
        if abs(p) < 1e-15:
            if q < 0:
                return None
            continue
        r = q / p
        if p < 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
    if t0 >= t1:
        return None
    return t0, t1


def intersection_lines(a, b, pts, cfg: LineConfig = LineConfig(), ids: tuple[int, int] = (0, 1)) -> list[CandidateLine]:
    """Projected intersection line of two adjacent, non-parallel roof regions (0 or 1 line)."""
    pts = np.asarray(getattr(pts, "roof_candidates", pts), dtype=float)
    n1, n2 = a.plane.n, b.plane.n
    ang = math.degrees(math.acos(min(1.0, abs(float(n1 @ n2)))))
    if ang <= cfg.angle_tol:
        return []
    xa = pts[a.member_indices, :2]
    xb = pts[b.member_indices, :2]
    if len(xa) == 0 or len(xb) == 0:
        return []
    gap, _ = cKDTree(xa).query(xb, k=1)
    if float(np.min(gap)) > cfg.adjacency_gap:
        return []

    union = np.vstack([xa, xb])
    origin = union.mean(axis=0)
    d = np.cross(n1, n2)
    dxy = d[:2]
    if math.hypot(*dxy) < 1e-9:
        return []
    o3 = np.append(origin, 0.0)
    m = np.vstack([n1, n2, d])
    rhs = np.array([a.plane.offset - n1 @ o3, b.plane.offset - n2 @ o3, 0.0])
    p = np.linalg.solve(m, rhs)[:2]
    u = dxy / math.hypot(*dxy)
    lo = union.min(axis=0) - origin - cfg.dist_tol
    hi = union.max(axis=0) - origin + cfg.dist_tol
    clip = _clip_to_box(p, u, (lo[0], lo[1], hi[0], hi[1]))
    if clip is None or clip[1] - clip[0] <= MIN_LINE_LENGTH:
        return []
    s = p + clip[0] * u + origin
    e = p + clip[1] * u + origin
    return [CandidateLine(LineSeg2(tuple(s.tolist()), tuple(e.tolist())), LineOrigin.INTERSECTION, tuple(ids))]


# --------------------------------------------------------------------------
# regularisation


def _as_candidate(line) -> CandidateLine:
    if isinstance(line, CandidateLine):
        return line
    return CandidateLine(line, LineOrigin.BOUNDARY, ())


def _circular_clusters(angles: np.ndarray, tol: float) -> list[list[int]]:
    """Single-linkage clusters of undirected angles in [0, pi)."""
    order = np.argsort(angles, kind="stable")
    clusters = [[int(order[0])]]
    for prev, cur in zip(order[:-1], order[1:]):
        if angles[cur] - angles[prev] <= tol:
            clusters[-1].append(int(cur))
        else:
            clusters.append([int(cur)])
    if len(clusters) > 1 and angles[order[0]] + math.pi - angles[order[-1]] <= tol:
        clusters[0] = clusters.pop() + clusters[0]
    return clusters


def regularize_lines(lines, cfg: LineConfig = LineConfig()) -> list[LineSeg2]:
    """Snap near-parallel lines to a common direction and merge near-coincident ones.

    Each merged line sits at the weighted mean offset of its members, with
    weight ``length`` (doubled for intersection lines).
    """
    cands = [_as_candidate(x) for x in lines]
    if not cands:
        raise EmptyInput("no lines to regularise")
    a = np.array([c.seg.a for c in cands], dtype=float)
    b = np.array([c.seg.b for c in cands], dtype=float)
    d = b - a
    lengths = np.hypot(d[:, 0], d[:, 1])
    theta = np.mod(np.arctan2(d[:, 1], d[:, 0]), math.pi)
    theta[theta >= math.pi] = 0.0
    weights = lengths * np.array([2.0 if c.origin == LineOrigin.INTERSECTION else 1.0 for c in cands])
    tol = math.radians(cfg.angle_tol) + 1e-12

    out = []
    for cluster in _circular_clusters(theta, tol):
        idx = np.asarray(cluster)
        w = lengths[idx]
        phi = 0.5 * math.atan2(float(w @ np.sin(2 * theta[idx])), float(w @ np.cos(2 * theta[idx])))
        phi = phi % math.pi
        if phi >= math.pi:
            phi = 0.0
        u = np.array([math.cos(phi), math.sin(phi)])
        nrm = np.array([-u[1], u[0]])
        mid = 0.5 * (a[idx] + b[idx])
        offs = mid @ nrm
        ta = a[idx] @ u
        tb = b[idx] @ u
        order = np.argsort(offs, kind="stable")
        groups = [[order[0]]]
        for p, q in zip(order[:-1], order[1:]):
            if offs[q] - offs[p] <= cfg.dist_tol + 1e-12:
                groups[-1].append(q)
            else:
                groups.append([q])
        for g in groups:
            g = np.asarray(g)
            wg = weights[idx][g]
            off = float(wg @ offs[g] / wg.sum())
            t0 = float(min(ta[g].min(), tb[g].min()))
            t1 = float(max(ta[g].max(), tb[g].max()))
            p0 = t0 * u + off * nrm
            p1 = t1 * u + off * nrm
            out.append((phi, off, LineSeg2(tuple(p0.tolist()), tuple(p1.tolist()))))
    out.sort(key=lambda r: (r[0], r[1]))
    return [seg for _, _, seg in out]


#: planes closer than this at a line's midpoint do not form a step edge
STEP_MIN = 0.5
#: half-width (degrees) and resolution of the direction search in step refinement
STEP_ANGLE_RANGE = 1.0
STEP_ANGLE_STEPS = 41


def _best_split(ta: np.ndarray, tb: np.ndarray) -> tuple[int, float, float]:
    """Threshold on a line separating ``ta`` (below) from ``tb`` (above).

    Returns ``(errors, gap, threshold)`` for the threshold with the fewest
    points on the wrong side, preferring the widest empty gap.
    """
    vals = np.concatenate([ta, tb])
    side = np.r_[np.zeros(len(ta), dtype=int), np.ones(len(tb), dtype=int)]
    order = np.argsort(vals, kind="stable")
    vals, side = vals[order], side[order]
    # threshold between vals[k-1] and vals[k]: A wrong above, B wrong below
    a_above = len(ta) - np.r_[0, np.cumsum(side == 0)]
    b_below = np.r_[0, np.cumsum(side == 1)]
    err = a_above + b_below
    lo = np.r_[vals[0] - 1.0, vals]
    hi = np.r_[vals, vals[-1] + 1.0]
    gap = hi - lo
    gap[0] = gap[-1] = 0.0
    best = min(range(len(err)), key=lambda k: (err[k], -gap[k], k))
    return int(err[best]), float(gap[best]), float(0.5 * (lo[best] + hi[best]))


def refine_step_lines(segs, regions, pts, cfg: LineConfig = LineConfig()) -> list[LineSeg2]:
    """Move lines lying on a height step to the best separator of the two planes' points.

    For each line, the roof points within ``dist_tol`` are labelled with the
    plane closest in height.  When the two most frequent planes differ by
    more than :data:`STEP_MIN` at the line's midpoint, the line is rotated
    (within :data:`STEP_ANGLE_RANGE` degrees) and shifted (within
    ``dist_tol``) to the position misclassifying the fewest points, and among
    those to the middle of the widest empty strip.  Other lines are kept.
    """
    pts = np.asarray(getattr(pts, "roof_candidates", pts), dtype=float).reshape(-1, 3)
    if len(regions) < 2 or len(pts) == 0:
        return list(segs)
    zfit = np.column_stack([r.plane.z_at(pts[:, 0], pts[:, 1]) for r in regions])
    best_plane = np.argmin(np.abs(zfit - pts[:, 2:3]), axis=1)
    out = []
    for s in segs:
        a = np.asarray(s.a, dtype=float)
        u = np.asarray(s.direction, dtype=float)
        nrm = np.array([-u[1], u[0]])
        rel = pts[:, :2] - a
        along = rel @ u
        across = rel @ nrm
        near = (along >= 0) & (along <= s.length) & (np.abs(across) <= cfg.dist_tol)
        labels = best_plane[near]
        counts = np.bincount(labels, minlength=len(regions)) if len(labels) else np.zeros(len(regions), dtype=int)
        pa, pb = (int(i) for i in np.argsort(-counts, kind="stable")[:2])
        mid = a + 0.5 * s.length * u
        za, zb = regions[pa].plane.z_at(mid[0], mid[1]), regions[pb].plane.z_at(mid[0], mid[1])
        if counts[pb] < 2 or abs(za - zb) <= STEP_MIN:
            out.append(s)
            continue
        sub = rel[near]
        in_a, in_b = labels == pa, labels == pb
        if across[near][in_a].mean() > across[near][in_b].mean():
            in_a, in_b = in_b, in_a
        centre = sub.mean(axis=0)
        best = None
        for dphi in np.radians(np.linspace(-STEP_ANGLE_RANGE, STEP_ANGLE_RANGE, STEP_ANGLE_STEPS)):
            c, sn = math.cos(dphi), math.sin(dphi)
            n2 = np.array([c * nrm[0] - sn * nrm[1], sn * nrm[0] + c * nrm[1]])
            t = (sub - centre) @ n2
            err, gap, th = _best_split(t[in_a], t[in_b])
            key = (err, -gap, abs(dphi))
            if best is None or key < best[0]:
                best = (key, n2, th)
        _, n2, th = best
        u2 = np.array([n2[1], -n2[0]])
        p0 = a + centre + th * n2
        # keep the original extent, measured along the new direction
        t0 = float((a - (a + centre)) @ u2)
        t1 = float((a + s.length * u - (a + centre)) @ u2)
        q0, q1 = p0 + t0 * u2, p0 + t1 * u2
        if abs(float((q0 - a) @ nrm)) > cfg.dist_tol or abs(float((q1 - a - s.length * u) @ nrm)) > cfg.dist_tol:
            out.append(s)
            continue
        out.append(LineSeg2(tuple(q0.tolist()), tuple(q1.tolist())))
    return out


def drop_footprint_aligned(segs, footprint: Polygon2, cfg: LineConfig = LineConfig(), samples: int = 5) -> list[LineSeg2]:
    """Remove lines that run within ``dist_tol`` of the footprint boundary along their whole length.

    Footprint edges are inserted into the partition unchanged, so such lines
    would only add slivers.
    """
    ring_segs = footprint.segments()
    kept = []
    t = np.linspace(0.0, 1.0, samples)
    for s in segs:
        a = np.asarray(s.a)
        b = np.asarray(s.b)
        probe = a[None, :] + t[:, None] * (b - a)[None, :]
        if np.all(segment_distances(probe, ring_segs) <= cfg.dist_tol):
            continue
        kept.append(s)
    return kept


def extract_lines(regions, pts, cfg: LineConfig = LineConfig()) -> list[CandidateLine]:
    """Boundary lines of every region plus intersection lines of every region pair."""
    lines = []
    for i, r in enumerate(regions):
        try:
            lines.extend(boundary_lines(r, pts, cfg, region_id=i))
        except DegenerateRegion:
            continue
    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            lines.extend(intersection_lines(regions[i], regions[j], pts, cfg, ids=(i, j)))
    return lines
