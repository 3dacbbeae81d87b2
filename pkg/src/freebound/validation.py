"""Independent oracles for the shape-calculus path.

Finite-difference gradients cross-check the adjoint-based derivative, the
Hessian probe samples second-order behavior near the known optimum, and
exact_circle_error scores a recovered boundary against the analytic optimum
of the concentric test problem (unit circle).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import FourierBoundary, eval_radius, sample_polyline, sample_fixed_boundary, encloses
from .meshing import MeshParams, morph, triangulate
from .shape_calculus import basis_modes, evaluate, evaluate_on_mesh, extend_velocity

__all__ = [
    "REMESH",
    "MORPH",
    "FdParams",
    "central_difference",
    "fd_gradient",
    "exact_circle_error",
    "hessian_probe",
]

REMESH = "REMESH"
MORPH = "MORPH"


@dataclass(frozen=True)
class FdParams:
    """Central-difference step and evaluation mode.

    MORPH displaces the nodes of one base mesh by the harmonic extension of
    each perturbation mode, so both sides of the difference share one
    connectivity and remesh noise cancels.  REMESH rebuilds the mesh per
    perturbed boundary, which is what the optimizer path does.
    """

    h: float = 1e-4
    mode: str = MORPH

    def __post_init__(self):
        if not 1e-8 < self.h < 1e-1:
            raise ValueError("fd step h must lie in (1e-8, 1e-1)")
        if self.mode not in (REMESH, MORPH):
            raise ValueError("fd mode must be REMESH or MORPH")


def _perturbed(boundary, mode, step):
    # zero-pad so a probe direction beyond the current truncation is legal
    n = max(len(boundary.a) - 1, mode.index)
    a = np.zeros(n + 1)
    a[: len(boundary.a)] = boundary.a
    b = np.zeros(n)
    b[: len(boundary.b)] = boundary.b
    if mode.kind == "cos":
        a[mode.index] += step
    else:
        b[mode.index - 1] += step
    return FourierBoundary(a=a, b=b)


def central_difference(func, x, h):
    """Central-difference gradient of a scalar function of a vector.

    Exact for quadratics up to roundoff; the REMESH gradient path is this
    helper applied to J as a function of the coefficient vector.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        out[i] = (func(x + e) - func(x - e)) / (2.0 * h)
    return out


def fd_gradient(problem, boundary, mesh_params, fd=None):
    """Central-difference gradient of J in the coefficient basis.

    Returns the (2N+1,) vector ordered like (a0..aN, b1..bN).  Raises if a
    perturbed boundary is inadmissible (nonpositive radius or Gamma no
    longer enclosing Sigma).
    """
    fd = fd or FdParams()
    if not isinstance(mesh_params, MeshParams):
        mesh_params = MeshParams(*mesh_params)
    modes = basis_modes(boundary.N)
    out = np.zeros(len(modes))

    if fd.mode == REMESH:
        def J_of(vec):
            return evaluate(problem, FourierBoundary.from_vector(vec), mesh_params).J

        return central_difference(J_of, boundary.to_vector(), fd.h)

    gp = sample_polyline(boundary, mesh_params.cnt2)
    sp = sample_fixed_boundary(problem.sigma, mesh_params.cnt1)
    if not encloses(boundary, sp):
        raise ValueError("free boundary does not strictly enclose Sigma")
    base = triangulate(gp, sp, mesh_params.target_edge_length)
    for i, mode in enumerate(modes):
        W = extend_velocity(base, mode)
        disp = np.stack([W.x.values, W.y.values], axis=-1)
        vals = []
        for s in (+1.0, -1.0):
            bp = _perturbed(boundary, mode, s * fd.h)
            vals.append(evaluate_on_mesh(problem, morph(base, s * fd.h * disp), bp).J)
        out[i] = (vals[0] - vals[1]) / (2.0 * fd.h)
    return out


def exact_circle_error(boundary, samples=4096):
    """Deviation of r(theta) from the unit circle (the known optimum of the
    concentric configuration with C=1 centered at the origin).

    mean_radius_dev is |mean(r) - 1|, max_radius_dev is max|r - 1|, both
    over a dense uniform theta sample.
    """
    theta = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    r = eval_radius(boundary, theta)
    return {
        "mean_radius_dev": float(abs(np.mean(r) - 1.0)),
        "max_radius_dev": float(np.max(np.abs(r - 1.0))),
    }


def hessian_probe(problem, boundary, mesh_params, mode, delta=1e-2):
    """Second central difference of J along one basis mode.

    (J(x + delta*e) - 2 J(x) + J(x - delta*e)) / delta^2 samples the
    diagonal of the shape Hessian in the coefficient basis; at the optimum
    the values are positive (coercivity) and grow with the mode index.
    """
    if not isinstance(mesh_params, MeshParams):
        mesh_params = MeshParams(*mesh_params)
    if not delta > 0:
        raise ValueError("delta must be positive")
    J0 = evaluate(problem, boundary, mesh_params).J
    Jp = evaluate(problem, _perturbed(boundary, mode, +delta), mesh_params).J
    Jm = evaluate(problem, _perturbed(boundary, mode, -delta), mesh_params).J
    return float((Jp - 2.0 * J0 + Jm) / (delta * delta))
