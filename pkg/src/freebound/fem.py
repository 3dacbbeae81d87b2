"""P1 Lagrange finite elements on a Mesh.

Assembly is exact for P1 (closed-form per-triangle stiffness).  Dirichlet
conditions are imposed by symmetric row/column elimination; the reduced SPD
system is solved by a sparse LU factorization (deterministic), with Jacobi
preconditioned conjugate gradients as fallback, and every solve verifies the
residual contract ||Ax - b||/||b|| <= 1e-10.  Factorizations are cached per
mesh so the repeated Dirichlet solves of one shape evaluation share them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import meshing
from .fields import boundary_values
from .meshing import GAMMA, SIGMA, boundary_nodes

__all__ = [
    "FemError",
    "ScalarField",
    "VectorField",
    "SparseSystem",
    "assemble_stiffness",
    "solve_mixed",
    "solve_dirichlet",
    "normal_flux_on_gamma",
    "normal_flux",
    "gamma_integral",
    "boundary_integral",
    "triangle_gradient",
    "write_field_csv",
]


class FemError(Exception):
    pass


@dataclass
class ScalarField:
    """Nodal P1 function: one value per mesh node."""

    mesh: meshing.Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.node_count,):
            raise ValueError("value count must equal node count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")


@dataclass
class VectorField:
    """Two scalar components on the same mesh."""

    x: ScalarField
    y: ScalarField

    def __post_init__(self):
        if self.x.mesh is not self.y.mesh:
            raise ValueError("components must live on the same mesh")

    @property
    def mesh(self):
        return self.x.mesh

    def nodal(self):
        return np.stack([self.x.values, self.y.values], axis=-1)


@dataclass
class SparseSystem:
    """Symmetric stiffness matrix, right-hand side, and constrained nodes."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray


def _tri_geometry(mesh):
    t = mesh.triangles
    x = mesh.nodes[:, 0][t]
    y = mesh.nodes[:, 1][t]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    if np.any(area <= 0):
        raise FemError("degenerate triangle in assembly")
    return b, c, area


@lru_cache(maxsize=8)
def _stiffness(mesh):
    b, c, area = _tri_geometry(mesh)
    t = mesh.triangles
    scale = 1.0 / (4.0 * area)
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(t[:, i])
            cols.append(t[:, j])
            vals.append((b[:, i] * b[:, j] + c[:, i] * c[:, j]) * scale)
    n = mesh.node_count
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return A.tocsr()


def assemble_stiffness(mesh):
    """SparseSystem with A_ij = int grad(phi_i).grad(phi_j), no constraints yet."""
    A = _stiffness(mesh)
    return SparseSystem(matrix=A.copy(), rhs=np.zeros(mesh.node_count), constrained=np.array([], dtype=np.int64))


def _volume_load(mesh, f_spec):
    """Load vector int f phi_i, edge-midpoint rule (exact for linear f)."""
    load = np.zeros(mesh.node_count)
    if f_spec is None:
        return load
    t = mesh.triangles
    _, _, area = _tri_geometry(mesh)
    p = mesh.nodes[t]
    m01 = 0.5 * (p[:, 0] + p[:, 1])
    m12 = 0.5 * (p[:, 1] + p[:, 2])
    m20 = 0.5 * (p[:, 2] + p[:, 0])
    f01 = np.asarray(f_spec.value(m01), dtype=float)
    f12 = np.asarray(f_spec.value(m12), dtype=float)
    f20 = np.asarray(f_spec.value(m20), dtype=float)
    w = area / 6.0
    np.add.at(load, t[:, 0], w * (f01 + f20))
    np.add.at(load, t[:, 1], w * (f01 + f12))
    np.add.at(load, t[:, 2], w * (f12 + f20))
    return load


def _loop_edges(mesh, tag):
    loop = boundary_nodes(mesh, tag)
    a = mesh.nodes[loop]
    b = mesh.nodes[np.roll(loop, -1)]
    return loop, a, b


def _surface_load(mesh, spec, tag, edge_scale=None):
    """int_tag g phi_i, edge-wise 2-point Gauss; g sees the edge normal."""
    loop, a, b = _loop_edges(mesh, tag)
    d = b - a
    L = np.hypot(d[:, 0], d[:, 1])
    # counterclockwise loops: domain-outward normal is right of the tangent on
    # the outer loop, left of it on the inner loop
    sgn = 1.0 if tag == GAMMA else -1.0
    normals = sgn * np.stack([d[:, 1], -d[:, 0]], axis=-1) / L[:, None]
    if edge_scale is not None:
        L = L * np.asarray(edge_scale, dtype=float)
    s1 = 0.5 - 0.5 / np.sqrt(3.0)
    s2 = 0.5 + 0.5 / np.sqrt(3.0)
    load = np.zeros(mesh.node_count)
    for s in (s1, s2):
        pts = a + s * d
        g = np.asarray(boundary_values(spec, pts, normals), dtype=float)
        np.add.at(load, loop, 0.5 * L * g * (1.0 - s))
        np.add.at(load, np.roll(loop, -1), 0.5 * L * g * s)
    return load


class _DirichletFactor:
    """Symmetric elimination of the constrained nodes + factorized solve."""

    def __init__(self, A, constrained, n):
        self.constrained = constrained
        mask = np.ones(n, dtype=bool)
        mask[constrained] = False
        self.free = np.where(mask)[0]
        self.K = A[self.free][:, self.free].tocsc()
        self.A_fc = A[self.free][:, constrained].tocsr()
        self.lu = spla.splu(self.K)
        self.n = n

    def solve(self, load, constrained_values):
        b = load[self.free] - self.A_fc @ constrained_values
        x = self.lu.solve(b)
        nb = np.linalg.norm(b)
        res = np.linalg.norm(self.K @ x - b)
        if res > 1e-10 * max(nb, 1e-300):
            diag = self.K.diagonal()
            M = sp.diags(1.0 / np.where(diag > 0, diag, 1.0))
            x, info = _cg(self.K, b, x0=x, M=M, maxiter=10 * len(b))
            res = np.linalg.norm(self.K @ x - b)
            if info != 0 or res > 1e-10 * max(nb, 1e-300):
                raise FemError(f"solver non-convergence: residual {res!r}")
        out = np.zeros(self.n)
        out[self.free] = x
        out[self.constrained] = constrained_values
        return out


def _cg(A, b, **kw):
    try:
        return spla.cg(A, b, rtol=1e-12, atol=0.0, **kw)
    except TypeError:  # scipy < 1.12 spells it tol
        return spla.cg(A, b, tol=1e-12, atol=0.0, **kw)


@lru_cache(maxsize=16)
def _factor(mesh, kind):
    A = _stiffness(mesh)
    if kind == "sigma":
        cons = boundary_nodes(mesh, SIGMA)
    else:
        cons = np.concatenate([boundary_nodes(mesh, GAMMA), boundary_nodes(mesh, SIGMA)])
    return _DirichletFactor(A, cons, mesh.node_count)


def solve_mixed(mesh, f_spec, g_spec, h_spec, gamma_edge_scale=None):
    """Solve -lap(u) = f with -du/dn = g on Gamma and u = h on Sigma.

    gamma_edge_scale (optional, per GAMMA loop edge) multiplies edge lengths
    in the Neumann quadrature; arc-over-chord ratios restore the smooth
    surface measure that straight edges under-count.
    """
    fac = _factor(mesh, "sigma")
    load = _volume_load(mesh, f_spec) - _surface_load(mesh, g_spec, GAMMA, edge_scale=gamma_edge_scale)
    hvals = np.asarray(h_spec.value(mesh.nodes[fac.constrained]), dtype=float)
    return ScalarField(mesh, fac.solve(load, hvals))


def solve_dirichlet(mesh, gamma_values, sigma_values, f_spec=None):
    """Solve -lap(w) = f with w given on both loops.

    gamma_values / sigma_values are scalars or arrays ordered like
    boundary_nodes(mesh, tag).
    """
    fac = _factor(mesh, "all")
    ng = len(boundary_nodes(mesh, GAMMA))
    ns = len(boundary_nodes(mesh, SIGMA))
    gv = np.broadcast_to(np.asarray(gamma_values, dtype=float), (ng,))
    sv = np.broadcast_to(np.asarray(sigma_values, dtype=float), (ns,))
    load = _volume_load(mesh, f_spec)
    return ScalarField(mesh, fac.solve(load, np.concatenate([gv, sv])))


def _loop_mass(a, b):
    """Cyclic 1D P1 mass matrix for a polyline loop with vertices a -> b."""
    L = np.hypot(*(b - a).T)
    n = len(L)
    idx = np.arange(n)
    nxt = (idx + 1) % n
    rows = np.concatenate([idx, nxt, idx, nxt])
    cols = np.concatenate([idx, nxt, nxt, idx])
    vals = np.concatenate([L / 3.0, L / 3.0, L / 6.0, L / 6.0])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()


def normal_flux(mesh, field, f_spec=None, tag=GAMMA):
    """Variational recovery of d(field)/dn on the tagged loop.

    Solves M q = r with r_i = (A field)_i - (int f phi_i) at the loop rows,
    using the unconstrained stiffness A; returns q ordered like
    boundary_nodes(mesh, tag).
    """
    if field.mesh is not mesh:
        raise ValueError("field lives on a different mesh")
    loop, a, b = _loop_edges(mesh, tag)
    r_full = _stiffness(mesh) @ field.values - _volume_load(mesh, f_spec)
    M = _loop_mass(a, b)
    q = spla.spsolve(M, r_full[loop])
    res = np.linalg.norm(M @ q - r_full[loop])
    if not np.all(np.isfinite(q)) or res > 1e-8 * max(np.linalg.norm(r_full[loop]), 1e-300):
        raise FemError("boundary mass solve failed")
    return q


def normal_flux_on_gamma(mesh, field, f_spec=None):
    return normal_flux(mesh, field, f_spec, GAMMA)


def boundary_integral(mesh, nodal_integrand, tag):
    """Edge-wise trapezoid of a loop-ordered integrand over the tagged loop."""
    loop, a, b = _loop_edges(mesh, tag)
    v = np.asarray(nodal_integrand, dtype=float)
    if v.shape != (len(loop),):
        raise ValueError("integrand must be given at the loop nodes, in order")
    L = np.hypot(*(b - a).T)
    return float(np.sum(0.5 * L * (v + np.roll(v, -1))))


def gamma_integral(mesh, nodal_integrand):
    """Trapezoid integral over the GAMMA loop."""
    return boundary_integral(mesh, nodal_integrand, GAMMA)


def triangle_gradient(mesh, field):
    """Exact gradient of the P1 interpolant, one 2-vector per triangle."""
    if field.mesh is not mesh:
        raise ValueError("field lives on a different mesh")
    bb, cc, area = _tri_geometry(mesh)
    v = field.values[mesh.triangles]
    gx = np.sum(v * bb, axis=1) / (2.0 * area)
    gy = np.sum(v * cc, axis=1) / (2.0 * area)
    return np.stack([gx, gy], axis=-1)


def write_field_csv(path, field):
    """Nodal dump: `node_index,value` per line."""
    with open(path, "w") as fh:
        for i, v in enumerate(field.values):
            fh.write(f"{i},{float(v)!r}\n")
