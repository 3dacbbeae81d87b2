"""Shared fixtures: the concentric (circle-in-circle) test problem and the
L-shaped fixed boundary, plus a mesh builder used across the suite."""

import numpy as np
import pytest

from freebound import (
    Constant,
    FixedBoundarySpec,
    FourierBoundary,
    LogDistance,
    ProblemData,
    sample_polyline,
    triangulate,
)
from freebound.geometry import sample_fixed_boundary

L_SHAPE_VERTICES = np.array(
    [
        [-0.25, -0.25],
        [0.25, -0.25],
        [0.25, 0.0],
        [0.0, 0.0],
        [0.0, 0.25],
        [-0.25, 0.25],
    ]
)


def make_annulus(boundary, sigma, cnt1, cnt2, target=None):
    gp = sample_polyline(boundary, cnt2)
    sp = sample_fixed_boundary(sigma, cnt1)
    return triangulate(gp, sp, target)


@pytest.fixture(scope="session")
def exp3_problem():
    # concentric configuration: f=0, g=1, h=-log r, Sigma a circle of radius 0.3
    return ProblemData(
        f_spec=Constant(0.0),
        g_spec=Constant(1.0),
        h_spec=LogDistance(C=1.0, x0=0.0, y0=0.0),
        sigma=FixedBoundarySpec.circle((0.0, 0.0), 0.3),
    )


@pytest.fixture(scope="session")
def exp3_initial():
    return FourierBoundary([2.0 / 3.0, 0.0], [1.0 / 12.0])


@pytest.fixture(scope="session")
def exp3_generic():
    # asymmetric variant of the initial guess: every gradient component is
    # genuinely nonzero, so relative FD comparisons are meaningful
    return FourierBoundary([2.0 / 3.0, 0.05], [1.0 / 12.0])


@pytest.fixture(scope="session")
def unit_circle():
    return FourierBoundary([1.0, 0.0], [0.0])


@pytest.fixture(scope="session")
def exp1_problem():
    return ProblemData(
        f_spec=Constant(0.0),
        g_spec=Constant(3.0),
        h_spec=Constant(1.0),
        sigma=FixedBoundarySpec.polygon(L_SHAPE_VERTICES),
    )


@pytest.fixture(scope="session")
def exp3_mesh_small(exp3_problem, exp3_initial):
    return make_annulus(exp3_initial, exp3_problem.sigma, 20, 50)


@pytest.fixture(scope="session")
def circle_annulus():
    # unit circle Gamma (64 pts) over the radius-0.3 circle Sigma (32 pts)
    sigma = FixedBoundarySpec.circle((0.0, 0.0), 0.3)
    return make_annulus(FourierBoundary([1.0]), sigma, 32, 64)
