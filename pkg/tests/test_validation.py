"""Finite-difference oracles, circle-error scoring, Hessian probe."""

import numpy as np
import pytest

from freebound import (
    FourierBoundary,
    MeshParams,
    central_difference,
    exact_circle_error,
    fd_gradient,
    gradient,
    hessian_probe,
)
from freebound.shape_calculus import COS
from freebound.validation import MORPH, REMESH, FdParams


def test_fd_params_validation():
    with pytest.raises(ValueError):
        FdParams(h=1e-9)
    with pytest.raises(ValueError):
        FdParams(h=0.5)
    with pytest.raises(ValueError):
        FdParams(mode="AVERAGE")
    assert FdParams().mode == MORPH


def test_central_difference_exact_on_quadratic():
    x = np.array([1.0, -2.0, 3.0])
    got = central_difference(lambda v: float(np.dot(v, v)), x, h=1e-2)
    assert np.max(np.abs(got - 2.0 * x)) < 1e-10


def test_fd_morph_matches_analytic(exp3_problem, exp3_generic):
    mp = MeshParams(20, 50)
    ana = gradient(exp3_problem, exp3_generic, mp)
    fd = fd_gradient(exp3_problem, exp3_generic, mp, FdParams(h=1e-4, mode=MORPH))
    floor = 1e-6 * np.max(np.abs(ana))
    assert fd.shape == ana.shape
    for a, f in zip(ana, fd):
        if abs(f) > floor:
            assert abs(a - f) <= 0.05 * abs(f)


def test_fd_remesh_agrees_with_morph(exp3_problem, exp3_generic):
    # independent route: full remesh per perturbation, same derivative
    mp = MeshParams(20, 50)
    morphed = fd_gradient(exp3_problem, exp3_generic, mp, FdParams(h=1e-4, mode=MORPH))
    remeshed = fd_gradient(exp3_problem, exp3_generic, mp, FdParams(h=1e-4, mode=REMESH))
    scale = np.max(np.abs(morphed))
    for m, r in zip(morphed, remeshed):
        if abs(m) > 1e-3 * scale:
            assert abs(m - r) <= 0.05 * abs(m)


def test_fd_richardson_self_consistency(exp3_problem, exp3_initial):
    mp = MeshParams(20, 50)
    g1 = fd_gradient(exp3_problem, exp3_initial, mp, FdParams(h=2e-4, mode=MORPH))
    g2 = fd_gradient(exp3_problem, exp3_initial, mp, FdParams(h=1e-4, mode=MORPH))
    assert np.linalg.norm(g1 - g2) <= 1e-3 * np.linalg.norm(g2)


def test_fd_infeasible_perturbation_raises(exp3_problem):
    # radius 0.31 barely clears Sigma (0.3); an h=0.05 step does not
    tight = FourierBoundary([0.35])
    with pytest.raises(ValueError):
        fd_gradient(exp3_problem, tight, MeshParams(20, 50), FdParams(h=0.06, mode=REMESH))


def test_exact_circle_error_unit_circle():
    out = exact_circle_error(FourierBoundary([1.0]))
    assert out["mean_radius_dev"] == 0.0
    assert out["max_radius_dev"] == 0.0


def test_exact_circle_error_b1_bump():
    out = exact_circle_error(FourierBoundary([1.0, 0.0], [0.01]))
    assert abs(out["max_radius_dev"] - 0.01) < 1e-12
    assert out["mean_radius_dev"] < 1e-12


def test_exact_circle_error_offset():
    out = exact_circle_error(FourierBoundary([1.02]))
    assert abs(out["mean_radius_dev"] - 0.02) < 1e-12
    assert abs(out["max_radius_dev"] - 0.02) < 1e-12


def test_hessian_probe_positive_near_optimum(exp3_problem, unit_circle):
    mp = MeshParams(40, 100)
    probes = [hessian_probe(exp3_problem, unit_circle, mp, COS(k)) for k in (1, 2)]
    assert probes[0] > 0.0
    assert probes[1] > probes[0]


def test_hessian_probe_delta_stable(exp3_problem, unit_circle):
    mp = MeshParams(40, 100)
    v1 = hessian_probe(exp3_problem, unit_circle, mp, COS(1), delta=1e-2)
    v2 = hessian_probe(exp3_problem, unit_circle, mp, COS(1), delta=5e-3)
    assert abs(v1 - v2) <= 0.02 * abs(v1)


def test_hessian_probe_rejects_bad_delta(exp3_problem, unit_circle):
    with pytest.raises(ValueError):
        hessian_probe(exp3_problem, unit_circle, MeshParams(20, 50), COS(0), delta=0.0)
