"""Triangulation of the annular domain between the loops Sigma and Gamma.

The mesh is a constrained Delaunay triangulation with Ruppert-style quality
refinement (minimum angle 20 degrees, area-based size target).  The point set
is generated deterministically: the prescribed boundary polyline points plus
an origin-anchored hexagonal interior lattice kept clear of the boundary, so
that every boundary segment has an empty diametral circle (a Gabriel edge)
and therefore appears in the Delaunay triangulation without repair in the
common case.  A cavity-retriangulation repair path with exactly filtered
predicates covers the remaining cases.  Everything is single-threaded and
free of randomness: identical inputs give bit-identical meshes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import points_in_polygon, is_simple_polyline, polygon_area, polyline_length

__all__ = [
    "GAMMA",
    "SIGMA",
    "Mesh",
    "MeshParams",
    "MeshingError",
    "triangulate",
    "boundary_nodes",
    "mesh_quality",
    "boundary_edge_triangles",
    "morph",
    "write_mesh",
    "read_mesh",
    "validate_mesh",
]

GAMMA = "GAMMA"
SIGMA = "SIGMA"

MIN_ANGLE_DEG = 20.0
_SIZE_FACTOR = 1.35  # size-bad when area > (sqrt(3)/4) * (_SIZE_FACTOR * target)^2
_MAX_ROUNDS = 40
_SMOOTH_SWEEPS = 4

# structured annulus layering between smooth loops: each ring sits at the edge
# midpoints of the previous one, offset inward by _RING_ASPECT times the local
# spacing, and the point count halves once the spacing drops under _RING_HALVE
# times the inner-loop spacing (keeps cell aspect near one all the way in)
_RING_ASPECT = 0.95
_RING_HALVE = 0.6
_TURN_LIMIT = np.deg2rad(30.0)


class MeshingError(Exception):
    pass


@dataclass(eq=False)
class Mesh:
    """Triangulated annulus.  Triangles are counterclockwise; boundary edges
    are directed along their loop (both loops counterclockwise) and tagged
    GAMMA (outer) or SIGMA (inner)."""

    nodes: np.ndarray  # (V, 2) float
    triangles: np.ndarray  # (T, 3) int
    boundary_edges: np.ndarray  # (B, 2) int
    boundary_tags: np.ndarray  # (B,) str

    @property
    def node_count(self):
        return len(self.nodes)

    @property
    def triangle_count(self):
        return len(self.triangles)


@dataclass(frozen=True)
class MeshParams:
    """Boundary point counts and the interior size target.

    cnt1 points go on Sigma, cnt2 on Gamma.  target_edge_length defaults to
    perimeter(Gamma)/cnt2, i.e. boundary spacing drives interior density.
    """

    cnt1: int
    cnt2: int
    target_edge_length: float | None = None

    def __post_init__(self):
        if self.cnt1 < 8 or self.cnt2 < 8:
            raise ValueError("boundary point counts must be >= 8")


# ---------------------------------------------------------------------------
# exact-filtered predicates (Fraction fallback), used only on repair paths


def _orient2d(pa, pb, pc):
    detleft = (pa[0] - pc[0]) * (pb[1] - pc[1])
    detright = (pa[1] - pc[1]) * (pb[0] - pc[0])
    det = detleft - detright
    if abs(det) > 1e-14 * (abs(detleft) + abs(detright)):
        return 1 if det > 0 else -1
    if detleft == 0.0 and detright == 0.0:
        return 0
    ax, ay = Fraction(pa[0]), Fraction(pa[1])
    bx, by = Fraction(pb[0]), Fraction(pb[1])
    cx, cy = Fraction(pc[0]), Fraction(pc[1])
    d = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return (d > 0) - (d < 0)


def _incircle(pa, pb, pc, pd):
    """> 0 if pd is strictly inside the circumcircle of CCW triangle (pa,pb,pc)."""
    adx, ady = pa[0] - pd[0], pa[1] - pd[1]
    bdx, bdy = pb[0] - pd[0], pb[1] - pd[1]
    cdx, cdy = pc[0] - pd[0], pc[1] - pd[1]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = (
        alift * (bdx * cdy - bdy * cdx)
        + blift * (cdx * ady - cdy * adx)
        + clift * (adx * bdy - ady * bdx)
    )
    scale = (
        alift * (abs(bdx * cdy) + abs(bdy * cdx))
        + blift * (abs(cdx * ady) + abs(cdy * adx))
        + clift * (abs(adx * bdy) + abs(ady * bdx))
    )
    if abs(det) > 1e-13 * scale:
        return 1 if det > 0 else -1
    fa = [Fraction(pa[0]) - Fraction(pd[0]), Fraction(pa[1]) - Fraction(pd[1])]
    fb = [Fraction(pb[0]) - Fraction(pd[0]), Fraction(pb[1]) - Fraction(pd[1])]
    fc = [Fraction(pc[0]) - Fraction(pd[0]), Fraction(pc[1]) - Fraction(pd[1])]
    la = fa[0] * fa[0] + fa[1] * fa[1]
    lb = fb[0] * fb[0] + fb[1] * fb[1]
    lc = fc[0] * fc[0] + fc[1] * fc[1]
    d = (
        la * (fb[0] * fc[1] - fb[1] * fc[0])
        + lb * (fc[0] * fa[1] - fc[1] * fa[0])
        + lc * (fa[0] * fb[1] - fa[1] * fb[0])
    )
    return (d > 0) - (d < 0)


# ---------------------------------------------------------------------------
# vectorized helpers


def _signed_areas(points, tris):
    p = points[tris]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    )


def _orient_ccw(points, tris):
    neg = _signed_areas(points, tris) < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def _min_angles(points, tris):
    """Minimum interior angle per triangle, in radians."""
    p = points[tris]
    angs = np.empty((len(tris), 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        dot = u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]
        angs[:, k] = np.arctan2(np.abs(cross), dot)
    return angs.min(axis=1)


def _circumcenters(points, tris):
    a = points[tris[:, 0]]
    b = points[tris[:, 1]]
    c = points[tris[:, 2]]
    ab = b - a
    ac = c - a
    d = 2.0 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    l2ab = ab[:, 0] ** 2 + ab[:, 1] ** 2
    l2ac = ac[:, 0] ** 2 + ac[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ux = (ac[:, 1] * l2ab - ab[:, 1] * l2ac) / d
        uy = (ab[:, 0] * l2ac - ac[:, 0] * l2ab) / d
    return a + np.stack([ux, uy], axis=-1)


def _dist_to_segments(pts, sa, sb):
    """(n, S) distances from each point to each segment."""
    ab = sb - sa
    l2 = np.maximum(ab[:, 0] ** 2 + ab[:, 1] ** 2, 1e-300)
    ap = pts[:, None, :] - sa[None, :, :]
    t = np.clip((ap[:, :, 0] * ab[None, :, 0] + ap[:, :, 1] * ab[None, :, 1]) / l2, 0.0, 1.0)
    proj = sa[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = pts[:, None, :] - proj
    return np.hypot(d[:, :, 0], d[:, :, 1])


def _edge_keys(e, n):
    lo = np.minimum(e[:, 0], e[:, 1]).astype(np.int64)
    hi = np.maximum(e[:, 0], e[:, 1]).astype(np.int64)
    return lo * np.int64(n) + hi


def _first_crossing(p, q, sa, sb):
    """Index of the segment the open ray p->q crosses first, or -1."""
    d = q - p
    e = sb - sa
    ap = sa - p
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    safe = np.abs(denom) > 1e-300
    denom = np.where(safe, denom, 1.0)
    t = (ap[:, 0] * e[:, 1] - ap[:, 1] * e[:, 0]) / denom
    s = (ap[:, 0] * d[1] - ap[:, 1] * d[0]) / denom
    # lower cutoff only guards a crossing at p itself; keep it tiny so a very
    # distant q (normalizing t by a huge ray length) still sees the boundary
    ok = safe & (s >= -1e-12) & (s <= 1.0 + 1e-12) & (t > 1e-14) & (t <= 1.0 + 1e-9)
    if not np.any(ok):
        return -1
    t = np.where(ok, t, np.inf)
    return int(np.argmin(t))


# ---------------------------------------------------------------------------
# constrained Delaunay: scipy kernel + cavity-retriangulation repair


def _delaunay_constrained(points, segs):
    dt = Delaunay(points)
    tris = _orient_ccw(points, dt.simplices.astype(np.int64).copy())
    n = len(points)
    tri_edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    present = np.isin(_edge_keys(segs, n), _edge_keys(tri_edges, n))
    if np.all(present):
        return tris
    tri_list = [tuple(t) for t in tris]
    for a, b in segs[~present]:
        tri_list = _insert_segment(points, tri_list, int(a), int(b))
    tris = np.asarray(tri_list, dtype=np.int64)
    return _orient_ccw(points, tris)


def _insert_segment(points, tri_list, a, b):
    """Force edge (a, b) into the triangulation by cavity retriangulation."""
    incident = {}
    for idx, t in enumerate(tri_list):
        for v in t:
            incident.setdefault(v, []).append(idx)
    for idx in incident.get(a, []):
        if b in tri_list[idx]:
            return tri_list  # edge already present (an earlier repair created it)
    edge_tri = {}
    for idx, t in enumerate(tri_list):
        for k in range(3):
            e = (min(t[k], t[(k + 1) % 3]), max(t[k], t[(k + 1) % 3]))
            edge_tri.setdefault(e, []).append(idx)

    pa, pb = points[a], points[b]

    def side(v):
        return _orient2d(pa, pb, points[v])

    # first crossed triangle: incident to a, with the opposite edge straddling ab
    cur = None
    for idx in incident.get(a, []):
        t = tri_list[idx]
        u, v = [x for x in t if x != a]
        # orient so (a, u, v) is CCW
        if _orient2d(pa, points[u], points[v]) < 0:
            u, v = v, u
        su, sv = side(u), side(v)
        if su < 0 and sv > 0:
            # ray a->b exits through edge (u, v); confirm b lies beyond that edge
            if _orient2d(points[u], points[v], pa) != _orient2d(points[u], points[v], pb):
                cur = (idx, u, v)
                break
    if cur is None:
        raise MeshingError("segment recovery failed to find a starting triangle")

    crossed = [cur[0]]
    right_chain = [cur[1]]  # side(u) < 0
    left_chain = [cur[2]]  # side(v) > 0
    u, v = cur[1], cur[2]
    while True:
        e = (min(u, v), max(u, v))
        nxt = [i for i in edge_tri.get(e, []) if i != crossed[-1]]
        if not nxt:
            raise MeshingError("segment recovery walked off the triangulation")
        idx = nxt[0]
        t = tri_list[idx]
        w = [x for x in t if x != u and x != v][0]
        crossed.append(idx)
        if w == b:
            break
        sw = side(w)
        if sw == 0:
            raise MeshingError("vertex exactly on a constrained segment")
        if sw < 0:
            right_chain.append(w)
            u = w
        else:
            left_chain.append(w)
            v = w

    keep = [t for i, t in enumerate(tri_list) if i not in set(crossed)]
    keep.extend(_triangulate_chain(points, a, b, left_chain))
    keep.extend(_triangulate_chain(points, a, b, right_chain))
    return keep


def _in_circumcircle(pa, pb, pc, pd):
    """True if pd is strictly inside the circumcircle of (pa,pb,pc), any orientation."""
    o = _orient2d(pa, pb, pc)
    return o * _incircle(pa, pb, pc, pd) > 0


def _triangulate_chain(points, a, b, chain):
    """Retriangulate one side of the cavity against edge (a, b) (Delaunay).

    Emitted triangles may be clockwise; the caller reorients globally.
    """
    if not chain:
        return []
    best = 0
    for k in range(1, len(chain)):
        if _in_circumcircle(points[a], points[chain[best]], points[b], points[chain[k]]):
            best = k
    tris = [(a, chain[best], b)]
    tris.extend(_triangulate_chain(points, a, chain[best], chain[:best]))
    tris.extend(_triangulate_chain(points, chain[best], b, chain[best + 1 :]))
    return tris


# ---------------------------------------------------------------------------
# triangulate pipeline


def _hex_lattice(xmin, xmax, ymin, ymax, h):
    """Origin-anchored hexagonal lattice covering the bounding box."""
    dy = h * np.sqrt(3.0) / 2.0
    j0 = int(np.floor(ymin / dy)) - 1
    j1 = int(np.ceil(ymax / dy)) + 1
    i0 = int(np.floor(xmin / h)) - 1
    i1 = int(np.ceil(xmax / h)) + 1
    jj = np.arange(j0, j1 + 1)
    ii = np.arange(i0, i1 + 1)
    X = ii[None, :] * h + (np.abs(jj[:, None]) % 2) * (h / 2.0)
    Y = np.broadcast_to(jj[:, None] * dy, X.shape)
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def _seg_arrays(points, segs):
    s = np.asarray(segs, dtype=np.int64)
    return points[s[:, 0]], points[s[:, 1]]


def _keep_mask(points, tris, gamma, sigma):
    cent = points[tris].mean(axis=1)
    keep = points_in_polygon(cent, gamma) & ~points_in_polygon(cent, sigma)
    # qhull emits zero-area simplices for exactly collinear hull points (a
    # split midpoint on a straight boundary run); they carry no region and
    # their centroids sit on a polygon edge, so drop them outright
    extent = np.max(np.ptp(points, axis=0))
    keep &= np.abs(_signed_areas(points, tris)) > 1e-14 * extent * extent
    return keep


def _loop_turns(poly):
    e = np.roll(poly, -1, axis=0) - poly
    ang = np.arctan2(e[:, 1], e[:, 0])
    turn = np.diff(ang, append=ang[:1])
    return np.abs((turn + np.pi) % (2.0 * np.pi) - np.pi)


def _loop_is_smooth(poly):
    return bool(np.max(_loop_turns(poly)) <= _TURN_LIMIT)


def _edge_lengths(poly):
    return np.hypot(*(np.roll(poly, -1, axis=0) - poly).T)


def _offset_ring(poly, aspect):
    # midpoints of a ccw loop pushed inward by aspect times the edge length;
    # successive rings alternate phase by construction
    e = np.roll(poly, -1, axis=0) - poly
    inward = np.stack([-e[:, 1], e[:, 0]], axis=1)
    nxt = poly + 0.5 * e + aspect * inward
    # the raw map amplifies the alternating (Nyquist) vertex mode by
    # 2*aspect per ring, so rounding noise would blow up over deep cascades;
    # a fractional Laplacian filter caps that gain below one while touching
    # smooth modes only at O((k/n)^2)
    lap = 0.25 * (np.roll(nxt, 1, axis=0) - 2.0 * nxt + np.roll(nxt, -1, axis=0))
    return nxt + 0.6 * lap


def _resample_uniform(poly):
    # re-space a closed loop to uniform arclength, same count and start.
    # Identity (to roundoff) on regular polygons.  The offset map also
    # amplifies a band of counter-rotating vertex modes that no local filter
    # can damp without distorting legitimate shape modes; re-spacing every
    # ring resets the tangential bunching those modes grow through.
    seg = _edge_lengths(poly)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.arange(len(poly)) * (cum[-1] / len(poly))
    idx = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(poly) - 1)
    frac = (t - cum[idx]) / np.where(seg[idx] > 0.0, seg[idx], 1.0)
    fwd = np.roll(poly, -1, axis=0)
    return poly[idx] + frac[:, None] * (fwd[idx] - poly[idx])


def _loop_gap(pa, pb):
    aa, ab = _seg_arrays(pa, [(i, (i + 1) % len(pa)) for i in range(len(pa))])
    ba, bb = _seg_arrays(pb, [(i, (i + 1) % len(pb)) for i in range(len(pb))])
    return min(_dist_to_segments(pb, aa, ab).min(axis=1).min(),
               _dist_to_segments(pa, ba, bb).min(axis=1).min())


def _cascade_rings(gamma, sigma, sigma_smooth):
    """Layer rings from Gamma toward Sigma.

    Returns (rings, reached): `reached` is True when the stack stops against
    the Sigma clearance rule, meaning the annulus is fully covered and no
    lattice fill is needed.  Against a non-smooth Sigma the stack only covers
    the outer part of the gap and a lattice pocket takes over.
    """
    sS = polyline_length(sigma) / len(sigma)
    sigma_segs = _seg_arrays(sigma, [(i, (i + 1) % len(sigma)) for i in range(len(sigma))])
    depth_cap = np.inf if sigma_smooth else 0.45 * _loop_gap(gamma, sigma)
    rings = []
    cur = gamma
    depth = 0.0
    reached = False
    for _ in range(500):
        if (sigma_smooth and len(cur) % 2 == 0 and len(cur) > 2 * len(sigma)
                and np.mean(_edge_lengths(cur)) < _RING_HALVE * sS):
            cur = cur[::2]
        nxt = _resample_uniform(_offset_ring(cur, _RING_ASPECT))
        if len(nxt) < 8:
            break
        dS = _dist_to_segments(nxt, *sigma_segs).min()
        if dS < 0.85 * _RING_ASPECT * sS:
            reached = sigma_smooth
            break
        step = np.mean(_edge_lengths(cur)) * _RING_ASPECT
        if depth + step > depth_cap:
            break
        ln = _edge_lengths(nxt)
        if ln.min() < 0.2 * ln.mean():
            break
        if not np.all(points_in_polygon(nxt, gamma)) or np.any(points_in_polygon(nxt, sigma)):
            break
        rings.append(nxt)
        cur = nxt
        depth += step
    return rings, reached


def triangulate(gamma_polyline, sigma_polyline, target_edge_length=None):
    """Mesh the region inside `gamma_polyline` and outside `sigma_polyline`.

    All input polyline segments appear as tagged mesh edges (split only when
    refinement must); the interior is refined to min angle >= 20 degrees and
    an area target derived from `target_edge_length` (default: mean Gamma
    spacing).  Raises MeshingError on invalid input or if refinement does not
    settle within a bounded number of insertions.
    """
    gamma = np.asarray(gamma_polyline, dtype=float)
    sigma = np.asarray(sigma_polyline, dtype=float)
    if polygon_area(gamma) < 0:
        gamma = gamma[::-1].copy()
    if polygon_area(sigma) < 0:
        sigma = sigma[::-1].copy()
    _validate_loops(gamma, sigma)

    h = float(target_edge_length) if target_edge_length else polyline_length(gamma) / len(gamma)
    if not h > 0:
        raise MeshingError("target edge length must be positive")

    nG, nS = len(gamma), len(sigma)
    bpts = np.vstack([gamma, sigma])
    segs = [(i, (i + 1) % nG) for i in range(nG)]
    segs += [(nG + i, nG + (i + 1) % nS) for i in range(nS)]
    tags = [GAMMA] * nG + [SIGMA] * nS

    # at the default sizing a smooth Gamma gets a layered annulus whose ring
    # spacing tracks the boundary spacing: the interpolation error pattern is
    # then self similar under (cnt1, cnt2) refinement, which an irregular
    # fill is not, and boundary flux errors shrink at the expected rate
    rings, reached = [], False
    if target_edge_length is None and _loop_is_smooth(gamma):
        rings, reached = _cascade_rings(gamma, sigma, _loop_is_smooth(sigma))
    ring_pts = np.vstack(rings) if rings else np.zeros((0, 2))

    if reached:
        lattice = np.zeros((0, 2))
    else:
        frontier = rings[-1] if rings else gamma
        lattice = _hex_lattice(
            frontier[:, 0].min(), frontier[:, 0].max(), frontier[:, 1].min(), frontier[:, 1].max(), h
        )
        inside = points_in_polygon(lattice, frontier) & ~points_in_polygon(lattice, sigma)
        lattice = lattice[inside]
    sa, sb = _seg_arrays(bpts, segs)
    seg_len = np.hypot(*(sb - sa).T)
    if rings and not reached:
        # the pocket fill must also keep clear of the innermost ring
        fa = rings[-1]
        fb = np.roll(fa, -1, axis=0)
        sa, sb = np.vstack([sa, fa]), np.vstack([sb, fb])
        seg_len = np.concatenate([seg_len, np.hypot(*(fb - fa).T)])
    clear = 0.55 * np.maximum(h, seg_len)
    if len(lattice):
        dmat = _dist_to_segments(lattice, sa, sb)
        lattice = lattice[np.all(dmat >= clear[None, :], axis=1)]

    points = np.vstack([bpts, ring_pts, lattice])
    n_pinned = len(bpts) + len(ring_pts)
    segs = np.asarray(segs, dtype=np.int64)

    tris = _delaunay_constrained(points, segs)
    keep = _keep_mask(points, tris, gamma, sigma)

    # Laplacian smoothing of the lattice points blends the irregular fill
    # into its surroundings; ring points stay pinned
    if len(lattice):
        for _ in range(_SMOOTH_SWEEPS):
            points = _smooth_once(points, tris[keep], n_pinned, n_pinned + len(lattice), sa, sb, seg_len, h, gamma, sigma)
            tris = _delaunay_constrained(points, segs)
            keep = _keep_mask(points, tris, gamma, sigma)

    # Ruppert-style refinement: split encroached segments, insert circumcenters.
    # The layered annulus legitimately carries cells up to its own largest
    # spacing (count halving doubles it), so the area target respects that.
    h_eff = h
    if rings:
        h_eff = max(h_eff, 1.02 * max(float(_edge_lengths(r).max()) for r in rings))
    if reached:
        h_eff = max(h_eff, 1.02 * polyline_length(sigma) / nS)
    amax = (np.sqrt(3.0) / 4.0) * (_SIZE_FACTOR * h_eff) ** 2
    min_angle = np.deg2rad(MIN_ANGLE_DEG)
    seg_list = [tuple(s) for s in segs]
    tag_list = list(tags)
    max_points = 60 * len(points) + 10000
    for _round in range(_MAX_ROUNDS):
        kt = tris[keep]
        sa, sb = _seg_arrays(points, np.asarray(seg_list, dtype=np.int64))
        mid = 0.5 * (sa + sb)
        rad = 0.5 * np.hypot(*(sb - sa).T)
        tree = cKDTree(points)

        # encroached boundary segments: any mesh point strictly inside the
        # diametral circle (endpoint distances equal rad, so they never count;
        # k=3 nearest suffices because the endpoints occupy two of the slots)
        d3, _ = tree.query(mid, k=3)
        encroached = np.where(np.any(d3 < rad[:, None] * (1.0 - 1e-12), axis=1))[0]

        angles = _min_angles(points, kt)
        areas = _signed_areas(points, kt)
        longest = np.max(
            np.stack(
                [
                    np.hypot(*(points[kt[:, 1]] - points[kt[:, 0]]).T),
                    np.hypot(*(points[kt[:, 2]] - points[kt[:, 1]]).T),
                    np.hypot(*(points[kt[:, 0]] - points[kt[:, 2]]).T),
                ]
            ),
            axis=0,
        )
        seg_key_arr = _edge_keys(np.asarray(seg_list, dtype=np.int64), len(points))
        on_boundary_longest = np.zeros(len(kt), dtype=bool)
        for pair in ((0, 1), (1, 2), (2, 0)):
            ek = _edge_keys(kt[:, pair], len(points))
            ln = np.hypot(*(points[kt[:, pair[1]]] - points[kt[:, pair[0]]]).T)
            on_boundary_longest |= np.isin(ek, seg_key_arr) & (ln >= longest * (1.0 - 1e-12))
        angle_bad = angles < min_angle
        size_bad = (areas > amax) & ~on_boundary_longest
        bad = np.where(angle_bad | size_bad)[0]

        if len(encroached) == 0 and len(bad) == 0:
            break

        split_set = set(int(s) for s in encroached)
        inserts = []
        insert_rc = []
        if len(bad):
            order = np.lexsort((kt[bad, 2], kt[bad, 1], kt[bad, 0], angles[bad]))
            bt = kt[bad][order]
            ccs = _circumcenters(points, bt)
            cc_ok = np.isfinite(ccs).all(axis=1)
            # a circumcenter encroaching a boundary segment splits it instead;
            # one outside the domain that encroaches nothing (it sailed past a
            # short boundary) splits the segment nearest to it
            if np.any(cc_ok):
                ccs = np.where(cc_ok[:, None], ccs, points[bt[:, 0]])
                in_dom = points_in_polygon(ccs, gamma) & ~points_in_polygon(ccs, sigma)
                rcs = np.hypot(*(ccs - points[bt[:, 0]]).T)
                cents = (points[bt[:, 0]] + points[bt[:, 1]] + points[bt[:, 2]]) / 3.0
                tree_mid = cKDTree(mid)
                near = tree_mid.query_ball_point(ccs, r=float(np.max(rad)))
                for k in range(len(ccs)):
                    if not cc_ok[k]:
                        continue
                    dk = np.hypot(*(mid[near[k]] - ccs[k]).T) if near[k] else np.empty(0)
                    hits = [near[k][t] for t in range(len(near[k])) if dk[t] < rad[near[k][t]] * (1.0 - 1e-12)]
                    if hits:
                        split_set.update(int(s) for s in hits)
                    elif in_dom[k]:
                        inserts.append(ccs[k])
                        insert_rc.append(rcs[k])
                    else:
                        # the circumcenter left the domain: split the boundary
                        # segment that blocks sight of it from the triangle
                        s = _first_crossing(cents[k], ccs[k], sa, sb)
                        if s >= 0:
                            split_set.add(s)
        new_pts = []
        for s in sorted(split_set):
            i, j = seg_list[s]
            if np.hypot(*(points[j] - points[i])) < 1e-3 * h:
                raise MeshingError("refinement drove a boundary segment below the length floor")
            new_pts.append(0.5 * (points[i] + points[j]))
        # separation filters keep insertion batches stable; gates shrink with
        # the candidate's own circumradius so fine local features still refine
        if inserts:
            accepted = list(new_pts)
            for c, rc in zip(inserts, insert_rc):
                gate = min(0.3 * h, 0.45 * rc)
                if tree.query(c, k=1)[0] < gate:
                    continue
                mut = max(gate, min(0.5 * h, 0.45 * rc))
                if accepted:
                    acc = np.asarray(accepted)
                    if np.min(np.hypot(acc[:, 0] - c[0], acc[:, 1] - c[1])) < mut:
                        continue
                accepted.append(c)
            new_pts = accepted
        if not new_pts:
            raise MeshingError(
                "refinement stalled without candidates "
                f"(round {_round}: {len(encroached)} encroached, {len(bad)} bad, "
                f"{len(inserts)} centers rejected by spacing gates)"
            )
        base = len(points)
        points = np.vstack([points, np.asarray(new_pts)])
        if len(points) > max_points:
            raise MeshingError("refinement exceeded the insertion budget")
        # apply segment splits (new point indices follow sorted(split_set))
        for offset, s in enumerate(sorted(split_set)):
            i, j = seg_list[s]
            m = base + offset
            seg_list[s] = (i, m)
            seg_list.append((m, j))
            tag_list.append(tag_list[s])
        segs = np.asarray(seg_list, dtype=np.int64)
        tris = _delaunay_constrained(points, segs)
        keep = _keep_mask(points, tris, gamma, sigma)
    else:
        raise MeshingError("refinement did not reach the angle bound in the round budget")

    return _finalize(points, tris[keep], seg_list, tag_list, gamma, sigma)


def _smooth_once(points, kept_tris, lo, hi, sa, sb, seg_len, h, gamma, sigma):
    """One Laplacian sweep over movable points (indices lo..hi), guarded so
    points keep the Gabriel clearance from boundary segments."""
    if hi <= lo:
        return points
    e = np.concatenate([kept_tris[:, [0, 1]], kept_tris[:, [1, 2]], kept_tris[:, [2, 0]]])
    acc = np.zeros_like(points)
    deg = np.zeros(len(points))
    np.add.at(acc, e[:, 0], points[e[:, 1]])
    np.add.at(deg, e[:, 0], 1.0)
    np.add.at(acc, e[:, 1], points[e[:, 0]])
    np.add.at(deg, e[:, 1], 1.0)
    mov = np.arange(lo, hi)
    mov = mov[deg[mov] > 0]
    if not len(mov):
        return points
    cand = acc[mov] / deg[mov, None]
    ok = points_in_polygon(cand, gamma) & ~points_in_polygon(cand, sigma)
    clear = 0.52 * np.maximum(h, seg_len)
    d = _dist_to_segments(cand, sa, sb)
    ok &= np.all(d >= clear[None, :], axis=1)
    out = points.copy()
    out[mov[ok]] = cand[ok]
    return out


def _validate_loops(gamma, sigma):
    if len(gamma) < 3 or len(sigma) < 3:
        raise MeshingError("boundary polylines need >= 3 points")
    if not is_simple_polyline(gamma):
        raise MeshingError("gamma polyline is not simple")
    if not is_simple_polyline(sigma):
        raise MeshingError("sigma polyline is not simple")
    if not np.all(points_in_polygon(sigma, gamma)):
        raise MeshingError("sigma must lie strictly inside gamma")
    if np.any(points_in_polygon(gamma, sigma)):
        raise MeshingError("gamma points fall inside sigma")
    ga, gb = gamma, np.roll(gamma, -1, axis=0)
    from .geometry import _segments_intersect

    for i in range(len(gamma)):
        if np.any(_segments_intersect(ga[i], gb[i], sigma, np.roll(sigma, -1, axis=0))):
            raise MeshingError("gamma and sigma polylines intersect")


def _finalize(points, kept, seg_list, tag_list, gamma, sigma):
    used = np.unique(kept)
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes = points[used]
    tris = remap[kept]
    segs = np.asarray(seg_list, dtype=np.int64)
    if np.any(remap[segs] < 0):
        raise MeshingError("a boundary segment lost its endpoints")
    segs = remap[segs]

    # canonical triangle ordering: smallest vertex first, then lexsort rows
    roll = np.argmin(tris, axis=1)
    tris = np.stack([tris[np.arange(len(tris)), (roll + k) % 3] for k in range(3)], axis=1)
    tris = tris[np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0]))]

    # boundary edges in loop order (gamma loop first)
    tags = np.asarray(tag_list)
    edges_out = []
    tags_out = []
    for tag in (GAMMA, SIGMA):
        sel = segs[tags == tag]
        nxt = {int(i): int(j) for i, j in sel}
        start = min(nxt.keys())
        loop = [start]
        while True:
            nx = nxt[loop[-1]]
            if nx == start:
                break
            loop.append(nx)
            if len(loop) > len(sel):
                raise MeshingError(f"{tag} boundary edges do not form a single loop")
        if len(loop) != len(sel):
            raise MeshingError(f"{tag} boundary edges do not form a single loop")
        for k in range(len(loop)):
            edges_out.append((loop[k], loop[(k + 1) % len(loop)]))
            tags_out.append(tag)

    mesh = Mesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=np.asarray(edges_out, dtype=np.int64),
        boundary_tags=np.asarray(tags_out),
    )
    validate_mesh(mesh, check_quality=True)
    return mesh


# ---------------------------------------------------------------------------
# queries and invariant checks


def boundary_nodes(mesh, tag):
    """Node indices along the tagged loop, in counterclockwise order."""
    if tag not in (GAMMA, SIGMA):
        raise ValueError(f"unknown boundary tag {tag!r}")
    sel = mesh.boundary_edges[mesh.boundary_tags == tag]
    if len(sel) == 0:
        raise ValueError(f"mesh has no {tag} boundary edges")
    nxt = {int(i): int(j) for i, j in sel}
    start = min(nxt.keys())
    loop = [start]
    while True:
        nx = nxt[loop[-1]]
        if nx == start:
            break
        loop.append(nx)
        if len(loop) > len(sel):
            raise ValueError(f"{tag} boundary edges do not close into one loop")
    nodes = np.asarray(loop, dtype=np.int64)
    if polygon_area(mesh.nodes[nodes]) < 0:
        nodes = np.concatenate([nodes[:1], nodes[1:][::-1]])
    return nodes


def mesh_quality(mesh):
    """Quality statistics: min_angle (degrees), max_edge, triangle_count."""
    if mesh.triangle_count == 0:
        raise ValueError("empty mesh")
    angles = _min_angles(mesh.nodes, mesh.triangles)
    p = mesh.nodes[mesh.triangles]
    edges = np.concatenate(
        [
            np.hypot(*(p[:, 1] - p[:, 0]).T),
            np.hypot(*(p[:, 2] - p[:, 1]).T),
            np.hypot(*(p[:, 0] - p[:, 2]).T),
        ]
    )
    return {
        "min_angle": float(np.rad2deg(angles.min())),
        "max_edge": float(edges.max()),
        "triangle_count": int(mesh.triangle_count),
    }


def boundary_edge_triangles(mesh):
    """For each boundary edge, the index of its unique adjacent triangle."""
    n = mesh.node_count
    tri_edges = np.concatenate(
        [mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]
    )
    tri_ids = np.tile(np.arange(mesh.triangle_count), 3)
    keys = _edge_keys(tri_edges, n)
    order = np.argsort(keys, kind="stable")
    keys_sorted = keys[order]
    bkeys = _edge_keys(mesh.boundary_edges, n)
    pos = np.searchsorted(keys_sorted, bkeys)
    out = np.empty(len(bkeys), dtype=np.int64)
    for k, (p_, key) in enumerate(zip(pos, bkeys)):
        if p_ >= len(keys_sorted) or keys_sorted[p_] != key:
            raise ValueError("boundary edge not found in any triangle")
        if p_ + 1 < len(keys_sorted) and keys_sorted[p_ + 1] == key:
            raise ValueError("boundary edge shared by two triangles")
        out[k] = tri_ids[order[p_]]
    return out


def morph(mesh, displacement):
    """New mesh with nodes displaced, connectivity unchanged.

    Used by finite-difference checks only; raises MeshingError if any triangle
    folds over.
    """
    disp = np.asarray(displacement, dtype=float)
    if disp.shape != mesh.nodes.shape:
        raise ValueError("displacement shape must match nodes")
    nodes = mesh.nodes + disp
    if np.any(_signed_areas(nodes, mesh.triangles) <= 0):
        raise MeshingError("morph displacement folds a triangle")
    return Mesh(
        nodes=nodes,
        triangles=mesh.triangles.copy(),
        boundary_edges=mesh.boundary_edges.copy(),
        boundary_tags=mesh.boundary_tags.copy(),
    )


def validate_mesh(mesh, check_quality=False):
    """Check the Mesh invariants; raises MeshingError on violation."""
    if np.any(_signed_areas(mesh.nodes, mesh.triangles) <= 0):
        raise MeshingError("triangle with non-positive area")
    try:
        boundary_edge_triangles(mesh)  # each boundary edge in exactly one triangle
        g_loop = boundary_nodes(mesh, GAMMA)
        s_loop = boundary_nodes(mesh, SIGMA)
    except ValueError as exc:
        raise MeshingError(str(exc)) from None
    if set(g_loop.tolist()) & set(s_loop.tolist()):
        raise MeshingError("GAMMA and SIGMA loops share nodes")
    if not np.all(points_in_polygon(mesh.nodes[s_loop], mesh.nodes[g_loop])):
        raise MeshingError("GAMMA loop does not enclose the SIGMA loop")
    if check_quality:
        q = mesh_quality(mesh)
        if q["min_angle"] < MIN_ANGLE_DEG - 1e-9:
            raise MeshingError(f"min angle {q['min_angle']:.3f} below {MIN_ANGLE_DEG}")
    return True


# ---------------------------------------------------------------------------
# plain-text mesh format: header `V T B`, vertex `x y`, triangle `i j k`,
# boundary `i j tag`


def write_mesh(path, mesh):
    with open(path, "w") as fh:
        fh.write(f"{mesh.node_count} {mesh.triangle_count} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{i} {j} {tag}\n")


def read_mesh(path):
    with open(path) as fh:
        tokens = fh.read().split("\n")
    head = tokens[0].split()
    if len(head) != 3:
        raise MeshingError("bad mesh header (want `V T B`)")
    nv, nt, nb = (int(x) for x in head)
    if len(tokens) < 1 + nv + nt + nb:
        raise MeshingError("truncated mesh file")
    nodes = np.array([[float(v) for v in tokens[1 + i].split()] for i in range(nv)])
    tris = np.array(
        [[int(v) for v in tokens[1 + nv + i].split()] for i in range(nt)], dtype=np.int64
    )
    edges = []
    tags = []
    for i in range(nb):
        a, b, tag = tokens[1 + nv + nt + i].split()
        edges.append((int(a), int(b)))
        tags.append(tag)
    mesh = Mesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=np.asarray(edges, dtype=np.int64),
        boundary_tags=np.asarray(tags),
    )
    validate_mesh(mesh)
    return mesh
