"""Objective, adjoint, velocity extensions, and the boundary shape gradient.

One shape evaluation meshes the annulus between the fixed boundary Sigma and
the trial free boundary Gamma, solves the mixed state problem for u, the
Dirichlet problem for w (w = u on Gamma, w = 0 on Sigma), recovers the flux
q = dw/dn on Gamma, and scores J = 1/2 int_Gamma q^2 ds.

The shape derivative along a velocity field W that vanishes on Sigma is
evaluated in curvature-free boundary form,

    dJ[W] = int_Gamma (W.n) { p (f - dg/dn) - (g + p) dp/dn } ds
          - int_Gamma { div(phi W) - D(phi W) n . n } ds,

with adjoint p (harmonic, p = q on Gamma, p = 0 on Sigma) and phi = p^2/2
+ p g.  The second integrand expands as div(phi W) = grad(phi).W + phi div W
and D(phi W) n.n = (W.n)(grad(phi).n) + phi (DW n.n); the trace of grad(phi)
and DW on each Gamma edge is the constant P1 gradient of the one adjacent
triangle.  The normal n at a Gamma node is the analytic star-shaped-boundary
normal at the node's polar angle, not the polygonal edge normal.

Ritz-Galerkin coordinates: perturbing the radius by dr(theta) = cos(i theta)
or sin(i theta) moves boundary points along dr(theta)(cos theta, sin theta),
so the partial derivatives of F(a0,...,aN,b1,...,bN) are dJ along the
harmonic extensions of exactly those boundary velocities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import (
    ScalarField,
    VectorField,
    gamma_integral,
    normal_flux,
    solve_dirichlet,
    solve_mixed,
    triangle_gradient,
)
from .geometry import (
    FixedBoundarySpec,
    FourierBoundary,
    arc_chord_ratios,
    encloses,
    eval_normal,
    polar_angle,
    sample_fixed_boundary,
    sample_polyline,
)
from .meshing import (
    GAMMA,
    SIGMA,
    MeshParams,
    boundary_edge_triangles,
    boundary_nodes,
    triangulate,
)

__all__ = [
    "ProblemData",
    "ShapeEvaluation",
    "Mode",
    "COS",
    "SIN",
    "basis_modes",
    "evaluate",
    "evaluate_on_mesh",
    "solve_adjoint",
    "extend_velocity",
    "euler_derivative",
    "gradient",
]


@dataclass(frozen=True)
class ProblemData:
    """Data functions f, g, h and the fixed inner boundary Sigma.

    Standing assumptions (f >= 0, g > 0 on Gamma, h > 0 on Sigma) are checked
    at mesh nodes on every evaluation.
    """

    f_spec: object
    g_spec: object
    h_spec: object
    sigma: FixedBoundarySpec

    def __post_init__(self):
        for name in ("g_spec", "h_spec"):
            spec = getattr(self, name)
            if not (hasattr(spec, "value") or hasattr(spec, "boundary_value")):
                raise ValueError(f"{name} must expose value() or boundary_value()")
        if not isinstance(self.sigma, FixedBoundarySpec):
            raise ValueError("sigma must be a FixedBoundarySpec")


@dataclass(frozen=True)
class Mode:
    """One Ritz-Galerkin perturbation direction dr = cos(i theta) or sin(i theta)."""

    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in ("cos", "sin"):
            raise ValueError("mode kind must be 'cos' or 'sin'")
        if self.index < 0 or (self.kind == "sin" and self.index < 1):
            raise ValueError("invalid mode index")

    def trace(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "cos":
            return np.cos(self.index * theta)
        return np.sin(self.index * theta)


def COS(i):
    return Mode("cos", i)


def SIN(i):
    return Mode("sin", i)


def basis_modes(N):
    """Modes ordered like the coefficient vector (a0,...,aN,b1,...,bN)."""
    return [COS(i) for i in range(N + 1)] + [SIN(i) for i in range(1, N + 1)]


@dataclass
class ShapeEvaluation:
    """State, tracking solution, flux, and objective for one trial shape.

    q holds dw/dn at the GAMMA loop nodes (ordered like gamma_loop); normals
    are analytic boundary normals at the node polar angles, available only
    when the evaluation came from a FourierBoundary.  p stays None until
    solve_adjoint fills it.
    """

    mesh: object
    boundary: FourierBoundary | None
    u: ScalarField
    w: ScalarField
    q: np.ndarray
    J: float
    gamma_loop: np.ndarray
    thetas: np.ndarray
    normals: np.ndarray | None
    p: ScalarField | None = None


def _check_standing_assumptions(problem, mesh, gamma_loop):
    gpts = mesh.nodes[gamma_loop]
    spts = mesh.nodes[boundary_nodes(mesh, SIGMA)]
    g = problem.g_spec
    if hasattr(g, "value"):
        if np.min(np.asarray(g.value(gpts), dtype=float)) <= 0.0:
            raise ValueError("standing assumption violated: g <= 0 at a Gamma node")
    h = problem.h_spec
    if hasattr(h, "value"):
        if np.min(np.asarray(h.value(spts), dtype=float)) <= 0.0:
            raise ValueError("standing assumption violated: h <= 0 at a Sigma node")
    f = problem.f_spec
    if f is not None and hasattr(f, "value"):
        if np.min(np.asarray(f.value(mesh.nodes), dtype=float)) < -1e-12:
            raise ValueError("standing assumption violated: f < 0 at a mesh node")


def evaluate_on_mesh(problem, mesh, boundary=None):
    """Solve the state pair and score J on an already-built mesh.

    With `boundary` given, the Gamma Neumann quadrature is corrected by
    arc-over-chord edge ratios; the polyline otherwise under-counts the
    surface measure by O(h^2), which shows up as a systematic objective
    and gradient bias at the same order as the discretization floor.
    """
    gamma_loop = boundary_nodes(mesh, GAMMA)
    _check_standing_assumptions(problem, mesh, gamma_loop)
    scale = None
    if boundary is not None:
        scale = arc_chord_ratios(boundary, polar_angle(mesh.nodes[gamma_loop]))
    u = solve_mixed(mesh, problem.f_spec, problem.g_spec, problem.h_spec, gamma_edge_scale=scale)
    w = solve_dirichlet(mesh, u.values[gamma_loop], 0.0)
    q = normal_flux(mesh, w, None, GAMMA)
    J = 0.5 * gamma_integral(mesh, q * q)
    thetas = polar_angle(mesh.nodes[gamma_loop])
    normals = eval_normal(boundary, thetas) if boundary is not None else None
    return ShapeEvaluation(
        mesh=mesh,
        boundary=boundary,
        u=u,
        w=w,
        q=q,
        J=float(J),
        gamma_loop=gamma_loop,
        thetas=thetas,
        normals=normals,
    )


def evaluate(problem, boundary, mesh_params):
    """Mesh the trial domain and evaluate the tracking objective."""
    if not isinstance(mesh_params, MeshParams):
        mesh_params = MeshParams(*mesh_params)
    gp = sample_polyline(boundary, mesh_params.cnt2)
    sp = sample_fixed_boundary(problem.sigma, mesh_params.cnt1)
    if not encloses(boundary, sp):
        raise ValueError("free boundary does not strictly enclose Sigma")
    mesh = triangulate(gp, sp, mesh_params.target_edge_length)
    return evaluate_on_mesh(problem, mesh, boundary)


def solve_adjoint(evaluation):
    """Adjoint state: harmonic, p = dw/dn on Gamma, p = 0 on Sigma."""
    p = solve_dirichlet(evaluation.mesh, evaluation.q, 0.0)
    evaluation.p = p
    return p


def extend_velocity(mesh, mode):
    """Harmonic extension of dr(theta)(cos theta, sin theta) from Gamma, 0 on Sigma."""
    loop = boundary_nodes(mesh, GAMMA)
    th = polar_angle(mesh.nodes[loop])
    t = mode.trace(th)
    wx = solve_dirichlet(mesh, t * np.cos(th), 0.0)
    wy = solve_dirichlet(mesh, t * np.sin(th), 0.0)
    return VectorField(wx, wy)


def _gamma_edge_triangles(mesh, loop):
    """Adjacent triangle of each loop edge (loop[k], loop[k+1])."""
    n = mesh.node_count
    adj = boundary_edge_triangles(mesh)
    be = mesh.boundary_edges
    lo = np.minimum(be[:, 0], be[:, 1]).astype(np.int64)
    hi = np.maximum(be[:, 0], be[:, 1]).astype(np.int64)
    table = dict(zip((lo * n + hi).tolist(), adj.tolist()))
    a = loop.astype(np.int64)
    b = np.roll(loop, -1).astype(np.int64)
    keys = np.minimum(a, b) * n + np.maximum(a, b)
    return np.array([table[int(k)] for k in keys], dtype=np.int64)


def euler_derivative(evaluation, p, W, problem):
    """dJ along W, in the curvature-free boundary form."""
    mesh = evaluation.mesh
    if p.mesh is not mesh or W.mesh is not mesh:
        raise ValueError("p and W must live on the evaluation's mesh")
    if evaluation.normals is None:
        raise ValueError("evaluation carries no analytic boundary normals")

    loop = evaluation.gamma_loop
    nvec = evaluation.normals
    pts = mesh.nodes[loop]
    p_g = p.values[loop]
    dpdn = normal_flux(mesh, p, None, GAMMA)
    Wg = W.nodal()[loop]
    Wn = np.sum(Wg * nvec, axis=1)

    f_g = 0.0
    if problem.f_spec is not None:
        f_g = np.asarray(problem.f_spec.value(pts), dtype=float)
    g_g = np.asarray(problem.g_spec.value(pts), dtype=float)
    dgdn = np.sum(np.asarray(problem.g_spec.gradient(pts), dtype=float) * nvec, axis=1)

    term1 = gamma_integral(mesh, Wn * (p_g * (f_g - dgdn) - (g_g + p_g) * dpdn))

    # phi = p^2/2 + p g as a nodal field; its gradient and DW come from the
    # one triangle adjacent to each Gamma edge
    g_all = np.asarray(problem.g_spec.value(mesh.nodes), dtype=float)
    phi = ScalarField(mesh, 0.5 * p.values**2 + p.values * g_all)
    grad_phi = triangle_gradient(mesh, phi)
    gWx = triangle_gradient(mesh, W.x)
    gWy = triangle_gradient(mesh, W.y)

    tri = _gamma_edge_triangles(mesh, loop)
    gp_e = grad_phi[tri]
    div_e = gWx[tri, 0] + gWy[tri, 1]
    DW_e = np.stack([gWx[tri], gWy[tri]], axis=1)  # DW[i, j] = dW_i/dx_j

    phi_g = phi.values[loop]
    nxt = np.roll(np.arange(len(loop)), -1)
    L = np.hypot(*(mesh.nodes[loop[nxt]] - pts).T)

    def endpoint(idx):
        n_i = nvec[idx]
        DWn = np.einsum("eij,ej->ei", DW_e, n_i)
        dwnn = np.sum(n_i * DWn, axis=1)
        divergence = np.sum(gp_e * Wg[idx], axis=1) + phi_g[idx] * div_e
        dmat = Wn[idx] * np.sum(gp_e * n_i, axis=1) + phi_g[idx] * dwnn
        return divergence - dmat

    ids = np.arange(len(loop))
    term2 = float(np.sum(0.5 * L * (endpoint(ids) + endpoint(nxt))))
    return float(term1 - term2)


def gradient(problem, boundary, mesh_params):
    """Full Ritz-Galerkin gradient, ordered (a0,...,aN,b1,...,bN)."""
    evaluation = evaluate(problem, boundary, mesh_params)
    p = solve_adjoint(evaluation)
    out = np.empty(boundary.dim)
    for k, mode in enumerate(basis_modes(boundary.N)):
        W = extend_velocity(evaluation.mesh, mode)
        out[k] = euler_derivative(evaluation, p, W, problem)
    return out
