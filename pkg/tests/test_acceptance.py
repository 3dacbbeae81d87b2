"""Acceptance checks, one test per contract item.

Each test exercises the stated configuration at the stated tolerance; the
pass/fail line of the test itself is the acceptance record.  The heavy
end-to-end items (the dimension sweep in particular) run the real bundled
configs, so this module dominates suite runtime.
"""

import time
from importlib.resources import files

import numpy as np
import pytest

from freebound import (
    Constant,
    FixedBoundarySpec,
    FourierBoundary,
    LogDistance,
    MeshParams,
    Polynomial,
    boundary_nodes,
    boundary_quadrature,
    eval_normal,
    exact_circle_error,
    fd_gradient,
    gradient,
    hessian_probe,
    solve_dirichlet,
    solve_mixed,
)
from freebound import GAMMA, SIGMA
from freebound.cli import run_config
from freebound.config import parse_config
from freebound.shape_calculus import COS
from freebound.validation import MORPH, FdParams

from conftest import make_annulus


def bundled(name):
    return parse_config(str(files("freebound").joinpath(f"configs/{name}.cfg")))


@pytest.fixture(scope="module")
def exp3_reference_runs(tmp_path_factory):
    # two consecutive runs of the bundled 40/100 config; first one timed
    cfg = bundled("experiment3_40_100")
    roots = [tmp_path_factory.mktemp(f"exp3_ref_{i}") for i in (1, 2)]
    t0 = time.perf_counter()
    first = run_config(cfg, out_dir=roots[0])
    elapsed = time.perf_counter() - t0
    run_config(cfg, out_dir=roots[1])
    return {"result": first, "elapsed": elapsed, "dirs": roots}


def test_criterion_1_experiment3_end_to_end(exp3_reference_runs):
    result = exp3_reference_runs["result"]
    final_J = result["objectives"][-1]
    assert final_J <= 1.5e-3
    devs = exact_circle_error(FourierBoundary.from_vector(result["iterates"][-1]))
    assert devs["mean_radius_dev"] <= 0.02
    assert devs["max_radius_dev"] <= 0.05
    assert exp3_reference_runs["elapsed"] <= 600.0
    print(
        f"criterion 1: final_J={final_J:.3e} mean_dev={devs['mean_radius_dev']:.3e} "
        f"max_dev={devs['max_radius_dev']:.3e} runtime={exp3_reference_runs['elapsed']:.1f}s"
    )


def test_criterion_2_experiment1_dimension_sweep(tmp_path):
    initials, finals = [], []
    for n in range(3, 9):
        result = run_config(bundled(f"experiment1_N{n}"), out_dir=tmp_path / f"N_{n}")
        initials.append(result["objectives"][0])
        finals.append(result["objectives"][-1])
    for J0 in initials:
        assert abs(J0 - 4.60377) <= 0.10 * 4.60377
    for a, b in zip(finals, finals[1:]):
        assert b <= a  # weakly decreasing in N
    assert finals[-1] <= 3.0 * 0.000846881
    print(f"criterion 2: initial_J={initials[0]:.5f} finals={[f'{v:.3e}' for v in finals]}")


def test_criterion_3_gradient_vs_fd_random_boundaries(exp3_problem):
    rng = np.random.default_rng(2026)
    mp = MeshParams(40, 100)
    fd = FdParams(h=1e-4, mode=MORPH)
    worst = 0.0
    for trial, N in enumerate((1, 2, 3, 1, 2)):
        a = np.concatenate([[rng.uniform(0.55, 0.8)],
                            rng.uniform(-0.04, 0.04, N) / np.arange(1, N + 1)])
        b = rng.uniform(-0.04, 0.04, N) / np.arange(1, N + 1)
        boundary = FourierBoundary(a, b)
        ana = gradient(exp3_problem, boundary, mp)
        num = fd_gradient(exp3_problem, boundary, mp, fd)
        floor = 1e-6 * np.max(np.abs(ana))
        for ai, fi in zip(ana, num):
            if abs(fi) > floor:
                rel = abs(ai - fi) / abs(fi)
                worst = max(worst, rel)
                assert rel <= 0.05, f"trial {trial}: rel err {rel:.4f}"
    print(f"criterion 3: five boundaries, worst significant rel err {worst:.4f}")


def test_criterion_4_stationarity_at_optimum(exp3_problem, unit_circle):
    norms = [
        float(np.max(np.abs(gradient(exp3_problem, unit_circle, MeshParams(c1, c2)))))
        for c1, c2 in ((40, 100), (80, 200), (160, 400))
    ]
    assert norms[0] <= 1e-3
    assert norms[1] < norms[0]
    assert norms[2] < norms[1]
    print(f"criterion 4: grad inf-norms {[f'{v:.2e}' for v in norms]}")


def test_criterion_5_hessian_coercivity_probe(exp3_problem):
    optimum = FourierBoundary([1.0] + [0.0] * 5, [0.0] * 5)
    mp = MeshParams(40, 100)
    probes = [hessian_probe(exp3_problem, optimum, mp, COS(k), delta=1e-2) for k in range(6)]
    assert all(v > 0.0 for v in probes)
    for a, b in zip(probes[1:], probes[2:]):
        assert b >= a  # non-decreasing for k >= 1
    print(f"criterion 5: probes {[f'{v:.2f}' for v in probes]}")


def test_criterion_6_fem_verification(unit_circle, circle_annulus):
    # manufactured harmonic convergence
    exact = Polynomial({(2, 0): 1.0, (0, 2): -1.0})
    sigma = FixedBoundarySpec.circle((0.0, 0.0), 0.3)
    errs = []
    for cnt1, cnt2 in ((32, 64), (64, 128), (128, 256), (256, 512)):
        m = make_annulus(unit_circle, sigma, cnt1, cnt2)
        w = solve_dirichlet(
            m,
            exact.value(m.nodes[boundary_nodes(m, GAMMA)]),
            exact.value(m.nodes[boundary_nodes(m, SIGMA)]),
        )
        p = m.nodes[m.triangles]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        area = 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        wts = np.zeros(m.node_count)
        np.add.at(wts, m.triangles.ravel(), np.repeat(area / 3.0, 3))
        errs.append(float(np.sqrt(np.sum(wts * (w.values - exact.value(m.nodes)) ** 2))))
    rate = np.polyfit(np.log2([1.0, 2.0, 4.0, 8.0]), -np.log2(errs), 1)[0]
    assert rate >= 1.8

    # patch tests: linears reproduced to machine precision
    m = circle_annulus

    class LinearNeumann:
        def boundary_value(self, points, normals):
            return -normals[:, 0]

    u = solve_mixed(m, None, LinearNeumann(), Polynomial({(1, 0): 1.0}))
    mixed_err = float(np.max(np.abs(u.values - m.nodes[:, 0])))
    lin = lambda p: 3.0 * p[:, 0] - 2.0 * p[:, 1] + 5.0
    w = solve_dirichlet(
        m, lin(m.nodes[boundary_nodes(m, GAMMA)]), lin(m.nodes[boundary_nodes(m, SIGMA)])
    )
    dirichlet_err = float(np.max(np.abs(w.values - lin(m.nodes))))
    assert mixed_err <= 1e-12
    assert dirichlet_err <= 1e-12
    print(f"criterion 6: L2 rate {rate:.2f}, patch errors {mixed_err:.1e}/{dirichlet_err:.1e}")


def test_criterion_7_geometry_exactness():
    R = 0.7
    total = sum(wt for _, wt in boundary_quadrature(FourierBoundary([R]), 64))
    circ_rel = abs(total - 2.0 * np.pi * R) / (2.0 * np.pi * R)
    assert circ_rel <= 1e-10
    n = eval_normal(FourierBoundary([1.0, 0.1]), np.pi / 2.0)
    want = np.array([-0.1, 1.0]) / np.sqrt(1.01)
    normal_err = max(abs(n.x - want[0]), abs(n.y - want[1]))
    assert normal_err <= 1e-12
    print(f"criterion 7: circumference rel err {circ_rel:.1e}, normal err {normal_err:.1e}")


def test_criterion_8_run_determinism(exp3_reference_runs):
    d1, d2 = exp3_reference_runs["dirs"]
    names = sorted(p.name for p in d1.iterdir())
    assert names == sorted(p.name for p in d2.iterdir())
    for name in names:
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name
    print(f"criterion 8: {len(names)} files byte-identical across reruns")
