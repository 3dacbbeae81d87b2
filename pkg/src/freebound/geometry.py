"""Star-shaped boundary curves, normals, surface measure, and polyline sampling.

The free boundary is a star-shaped curve r(theta)*(cos theta, sin theta) with

    r(theta) = a0 + sum_i a_i cos(i theta) + sum_i b_i sin(i theta),

a truncated Fourier series of order N.  The coefficient vector is ordered
(a0, ..., aN, b1, ..., bN) and has dimension 2N+1.  The fixed inner boundary
is either a simple polygon or a circle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FourierBoundary",
    "FixedBoundarySpec",
    "UnitVector2",
    "eval_radius",
    "eval_radius_derivative",
    "eval_normal",
    "boundary_quadrature",
    "arc_chord_ratios",
    "sample_polyline",
    "sample_fixed_boundary",
    "polar_angle",
    "polyline_length",
    "polygon_area",
    "is_simple_polyline",
    "points_in_polygon",
    "encloses",
    "write_polyline_csv",
]


@dataclass(frozen=True)
class UnitVector2:
    """A 2D unit vector; the constructor enforces unit length to 1e-12."""

    x: float
    y: float

    def __post_init__(self):
        nrm = self.x * self.x + self.y * self.y
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"not a unit vector: |v|^2 = {nrm!r}")

    def as_array(self):
        return np.array([self.x, self.y])


class FourierBoundary:
    """Truncated Fourier parametrization of a star-shaped boundary.

    a holds the N+1 cosine coefficients (a[0] is the constant term), b the
    N sine coefficients.  Construction validates r(theta) > 0 on a dense
    sample of 16N+64 angles.
    """

    def __init__(self, a, b=None):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if b is None:
            b = np.zeros(len(a) - 1)
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if a.ndim != 1 or b.ndim != 1 or len(b) != len(a) - 1:
            raise ValueError("need len(b) == len(a) - 1")
        self.a = a
        self.b = b
        self.N = len(a) - 1
        theta = np.linspace(0.0, 2.0 * np.pi, 16 * self.N + 64, endpoint=False)
        r = eval_radius(self, theta)
        if not np.all(r > 0.0):
            raise ValueError("r(theta) <= 0 on the dense positivity sample")

    @property
    def dim(self):
        return 2 * self.N + 1

    @classmethod
    def from_vector(cls, vec):
        """Build from the (a0,...,aN,b1,...,bN) coefficient vector."""
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or len(vec) % 2 == 0:
            raise ValueError("coefficient vector must have odd length 2N+1")
        n = (len(vec) - 1) // 2
        return cls(vec[: n + 1], vec[n + 1 :])

    def to_vector(self):
        return np.concatenate([self.a, self.b])

    def __repr__(self):
        return f"FourierBoundary(a={self.a.tolist()}, b={self.b.tolist()})"


@dataclass(frozen=True)
class FixedBoundarySpec:
    """Fixed inner boundary: kind 'polygon' (vertex array) or 'circle'."""

    kind: str
    vertices: np.ndarray | None = None
    center: tuple = (0.0, 0.0)
    radius: float = 0.0

    def __post_init__(self):
        if self.kind == "polygon":
            v = np.asarray(self.vertices, dtype=float)
            if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
                raise ValueError("polygon needs >= 3 vertices of shape (m, 2)")
            if not is_simple_polyline(v):
                raise ValueError("polygon must be simple and closed")
            object.__setattr__(self, "vertices", v)
        elif self.kind == "circle":
            if not self.radius > 0.0:
                raise ValueError("circle radius must be > 0")
        else:
            raise ValueError(f"unknown fixed-boundary kind {self.kind!r}")

    @classmethod
    def polygon(cls, vertices):
        return cls(kind="polygon", vertices=np.asarray(vertices, dtype=float))

    @classmethod
    def circle(cls, center, radius):
        return cls(kind="circle", center=(float(center[0]), float(center[1])), radius=float(radius))


def _fourier_terms(boundary, theta):
    theta = np.asarray(theta, dtype=float)
    i = np.arange(1, boundary.N + 1)
    arg = np.multiply.outer(theta, i)  # (..., N)
    return theta, i, arg


def eval_radius(boundary, theta):
    """r(theta); accepts scalars or arrays."""
    scalar = np.ndim(theta) == 0
    theta, i, arg = _fourier_terms(boundary, theta)
    r = boundary.a[0] + np.cos(arg) @ boundary.a[1:] + np.sin(arg) @ boundary.b
    return float(r) if scalar else r


def eval_radius_derivative(boundary, theta):
    """r'(theta); the analogous derivative evaluation."""
    scalar = np.ndim(theta) == 0
    theta, i, arg = _fourier_terms(boundary, theta)
    dr = -np.sin(arg) @ (i * boundary.a[1:]) + np.cos(arg) @ (i * boundary.b)
    return float(dr) if scalar else dr


def eval_normal(boundary, theta):
    """Unit outward normal n = (r xhat - r' tauhat)/sqrt(r^2 + r'^2).

    xhat = (cos theta, sin theta), tauhat = (-sin theta, cos theta).  Scalar
    theta returns a UnitVector2; an array returns an (n, 2) array.
    """
    scalar = np.ndim(theta) == 0
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    r = eval_radius(boundary, th)
    dr = eval_radius_derivative(boundary, th)
    c, s = np.cos(th), np.sin(th)
    scale = 1.0 / np.sqrt(r * r + dr * dr)
    n = np.stack([(r * c + dr * s) * scale, (r * s - dr * c) * scale], axis=-1)
    if scalar:
        return UnitVector2(float(n[0, 0]), float(n[0, 1]))
    return n


def boundary_quadrature(boundary, num_points):
    """Quadrature for the surface integral over Gamma.

    Composite trapezoid in theta with the surface element sqrt(r^2 + r'^2):
    int_Gamma f dsigma = sum_i w_i f(x_i).  Spectrally accurate for smooth
    periodic data.  Returns a list of (point, weight) pairs.
    """
    if num_points < 8:
        raise ValueError("num_points must be >= 8")
    theta = np.linspace(0.0, 2.0 * np.pi, num_points, endpoint=False)
    r = eval_radius(boundary, theta)
    dr = eval_radius_derivative(boundary, theta)
    pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    w = (2.0 * np.pi / num_points) * np.sqrt(r * r + dr * dr)
    return [(pts[i], float(w[i])) for i in range(num_points)]


def arc_chord_ratios(boundary, thetas):
    """Per-edge arc-over-chord length ratio along a node loop on `boundary`.

    `thetas` holds the node polar angles in loop order; edge i joins node i
    to node i+1 (cyclic).  Straight-edge quadrature on the sampled polyline
    short-changes the surface measure by about dtheta^2/24 per edge; scaling
    edge lengths by these ratios restores the smooth measure.  Arc lengths
    use 4-point Gauss-Legendre on sqrt(r^2 + r'^2) per interval.
    """
    th0 = np.asarray(thetas, dtype=float)
    th1 = np.roll(th0, -1)
    dth = (th1 - th0 + np.pi) % (2.0 * np.pi) - np.pi
    xi = np.array([0.3399810435848563, 0.8611363115940526])
    wt = np.array([0.6521451548625461, 0.3478548451374538])
    nodes = np.concatenate([0.5 - 0.5 * xi, 0.5 + 0.5 * xi])
    weights = 0.5 * np.concatenate([wt, wt])
    arc = np.zeros_like(th0)
    for x, w in zip(nodes, weights):
        t = th0 + x * dth
        r = eval_radius(boundary, t)
        dr = eval_radius_derivative(boundary, t)
        arc += w * np.sqrt(r * r + dr * dr)
    arc *= np.abs(dth)
    r0 = eval_radius(boundary, th0)
    p = np.stack([r0 * np.cos(th0), r0 * np.sin(th0)], axis=-1)
    chord = np.hypot(*(np.roll(p, -1, axis=0) - p).T)
    return arc / chord


def sample_polyline(boundary, count):
    """Closed polyline of `count` points at uniformly spaced theta.

    Returns a (count, 2) array; the closing edge back to point 0 is implicit.
    count >= 3 is accepted (a closed polygon needs at least 3 points).
    """
    if count < 3:
        raise ValueError("count must be >= 3")
    theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    r = eval_radius(boundary, theta)
    if not np.all(r > 0.0):
        raise ValueError("r(theta) <= 0 at a polyline sample")
    pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    if np.any(np.all(pts == np.roll(pts, -1, axis=0), axis=1)):
        raise ValueError("consecutive polyline points coincide")
    return pts


def sample_fixed_boundary(spec, count):
    """Closed polyline with `count` points on the fixed boundary Sigma.

    Circle: uniform angles.  Polygon: points distributed along sides
    proportionally to side length (largest-remainder rounding); every
    polygon vertex is always included, so count >= number of vertices.
    """
    if spec.kind == "circle":
        if count < 3:
            raise ValueError("count must be >= 3")
        theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        cx, cy = spec.center
        return np.stack(
            [cx + spec.radius * np.cos(theta), cy + spec.radius * np.sin(theta)], axis=-1
        )
    verts = spec.vertices
    m = len(verts)
    if count < m:
        raise ValueError(f"count must be >= {m} (one point per polygon vertex)")
    side = np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)
    # largest-remainder allocation of `count` segments over sides, >= 1 each
    quota = side / side.sum() * count
    n_seg = np.maximum(1, np.floor(quota).astype(int))
    while n_seg.sum() > count:
        k = np.argmax(np.where(n_seg > 1, n_seg - quota, -np.inf))
        n_seg[k] -= 1
    while n_seg.sum() < count:
        k = np.argmax(quota - n_seg)
        n_seg[k] += 1
    pts = []
    for k in range(m):
        t = np.arange(n_seg[k]) / n_seg[k]
        pts.append(verts[k] + t[:, None] * (np.roll(verts, -1, axis=0)[k] - verts[k]))
    return np.vstack(pts)


def polar_angle(point):
    """Polar angle in [0, 2*pi); accepts one point or an (n, 2) array."""
    p = np.asarray(point, dtype=float)
    scalar = p.ndim == 1
    p = np.atleast_2d(p)
    if np.any((p[:, 0] == 0.0) & (p[:, 1] == 0.0)):
        raise ValueError("polar angle undefined at the origin")
    th = np.arctan2(p[:, 1], p[:, 0])
    th = np.where(th < 0.0, th + 2.0 * np.pi, th)
    return float(th[0]) if scalar else th


def polyline_length(points):
    """Total length of the closed polyline through `points`."""
    d = np.roll(points, -1, axis=0) - points
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def polygon_area(points):
    """Signed shoelace area of the closed polyline (positive if CCW)."""
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_simple_polyline(points):
    """True if the closed polyline has no self-intersections."""
    n = len(points)
    if n < 3:
        return False
    a = points
    b = np.roll(points, -1, axis=0)
    for i in range(n):
        # skip the two neighbors sharing an endpoint with segment i
        js = [j for j in range(i + 2, n) if not (i == 0 and j == n - 1)]
        if not js:
            continue
        js = np.array(js)
        if np.any(_segments_intersect(a[i], b[i], a[js], b[js])):
            return False
    d = b - a
    if np.any((d[:, 0] == 0.0) & (d[:, 1] == 0.0)):
        return False
    return True


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (
        b[..., 0] - o[..., 0]
    )


def _segments_intersect(p, q, a, b):
    """Vectorized proper/improper intersection test of segment (p,q) vs (a_i,b_i)."""
    d1 = _cross(a, b, p[None, :])
    d2 = _cross(a, b, q[None, :])
    d3 = _cross(p[None, :], q[None, :], a)
    d4 = _cross(p[None, :], q[None, :], b)
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) & (d1 != 0) & (d2 != 0) & (d3 != 0) & (d4 != 0)
    touch = (d1 == 0) | (d2 == 0) | (d3 == 0) | (d4 == 0)
    # collinear touching counts as an intersection only if the boxes overlap
    if np.any(touch):
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        plo = np.minimum(p, q)[None, :]
        phi = np.maximum(p, q)[None, :]
        overlap = np.all((lo <= phi) & (hi >= plo), axis=1)
        on = np.zeros(len(a), dtype=bool)
        for dd, pt in ((d1, p), (d2, q)):
            within = np.all((np.minimum(a, b) <= pt) & (pt <= np.maximum(a, b)), axis=1)
            on |= (dd == 0) & within
        for dd, pts in ((d3, a), (d4, b)):
            within = np.all((np.minimum(p, q)[None, :] <= pts) & (pts <= np.maximum(p, q)[None, :]), axis=1)
            on |= (dd == 0) & within
        return proper | (touch & overlap & on)
    return proper


def points_in_polygon(points, polygon):
    """Crossing-number test, vectorized over `points` (n, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    ya, yb = a[:, 1][None, :], b[:, 1][None, :]
    xa, xb = a[:, 0][None, :], b[:, 0][None, :]
    cond = (ya <= y) != (yb <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = xa + (y - ya) * (xb - xa) / (yb - ya)
    crossings = np.sum(cond & (x < xi), axis=1)
    return crossings % 2 == 1


def encloses(boundary, sigma_points, margin=0.0):
    """True if the curve r(theta) strictly encloses every point of Sigma.

    Checked at the sampled points' polar angles; points at the origin are
    trivially enclosed (r > 0 by construction).
    """
    pts = np.asarray(sigma_points, dtype=float)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    mask = rho > 0.0
    if not np.any(mask):
        return True
    th = np.arctan2(pts[mask, 1], pts[mask, 0])
    r = eval_radius(boundary, np.where(th < 0, th + 2 * np.pi, th))
    return bool(np.all(r > rho[mask] + margin))


def write_polyline_csv(path, points):
    """Plain-text CSV export: one `x,y` pair per line, closed implicitly."""
    with open(path, "w") as fh:
        for x, y in np.asarray(points, dtype=float):
            fh.write(f"{float(x)!r},{float(y)!r}\n")
