"""Experiment harness: `freebound run <config>` and `freebound sweep <config>`.

Every run writes trajectory.csv, boundary_initial.csv, boundary_final.csv,
and summary.txt into the config's output directory (mode-specific reports
come on top).  Outputs are written only after the computation finished, so a
failed run leaves no partial files.  Relative output directories can be
rerooted with the FREEBOUND_OUT_ROOT environment variable.

Exit codes: 0 success, 1 runtime failure (mesh/solver/optimizer), 2 bad
usage or config.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, boundary_from_coefficients, parse_config
from .fem import FemError
from .geometry import sample_polyline, write_polyline_csv
from .meshing import MeshingError
from .optimizer import OptimizerError, descend
from .shape_calculus import basis_modes, evaluate, gradient
from .validation import fd_gradient, hessian_probe

__all__ = ["main", "run_config", "sweep_config"]

_RUNTIME_ERRORS = (MeshingError, FemError, OptimizerError, ValueError)


def _r(v):
    return repr(float(v))


def _coeff_names(N):
    return [f"a{i}" for i in range(N + 1)] + [f"b{i}" for i in range(1, N + 1)]


def _mode_names(N):
    return [f"cos{i}" for i in range(N + 1)] + [f"sin{i}" for i in range(1, N + 1)]


def _resolve_out(out):
    p = Path(out)
    root = os.environ.get("FREEBOUND_OUT_ROOT")
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _trajectory_rows(cfg, iterates, objectives, steps):
    names = _coeff_names(cfg.N)
    lines = ["iter,J,alpha," + ",".join(names)]
    for k, (x, J) in enumerate(zip(iterates, objectives)):
        alpha = cfg.descent.alpha0 if k == 0 else steps[k - 1]
        coeffs = ",".join(_r(c) for c in x)
        lines.append(f"{k},{_r(J)},{_r(alpha)},{coeffs}")
    return lines


def _execute(cfg):
    """Run the configured mode; returns everything the writers need."""
    problem = cfg.problem()
    mp = cfg.mesh_params()
    N = cfg.N
    x0 = cfg.initial_coefficients()
    b0 = cfg.initial_boundary()
    result = {"extra_files": {}, "summary": [f"mode {cfg.mode}"]}

    if cfg.mode == "OPTIMIZE":
        def objective(x):
            try:
                return evaluate(problem, boundary_from_coefficients(x, N), mp).J
            except (ValueError, MeshingError):
                return float("inf")

        def grad(x):
            return gradient(problem, boundary_from_coefficients(x, N), mp)

        traj = descend(objective, grad, x0, cfg.descent)
        result["iterates"] = traj.iterates
        result["objectives"] = traj.objective_values
        result["steps"] = traj.step_sizes
        result["summary"] += [
            f"initial_J {_r(traj.objective_values[0])}",
            f"iterations {len(traj.step_sizes)}",
            f"final_J {_r(traj.objective_values[-1])}",
            f"stop_reason {traj.stop_reason}",
        ]
        return result

    ev = evaluate(problem, b0, mp)
    result["iterates"] = [x0]
    result["objectives"] = [ev.J]
    result["steps"] = []
    result["summary"] += [f"initial_J {_r(ev.J)}", "iterations 0", f"final_J {_r(ev.J)}"]

    if cfg.mode == "GRAD_CHECK":
        ana = gradient(problem, b0, mp)
        fd = fd_gradient(problem, b0, mp, cfg.fd)
        floor = 1e-6 * max(float(np.max(np.abs(ana))), 1e-300)
        lines = ["component,analytic,fd,rel_err"]
        worst = 0.0
        for name, a, f in zip(_coeff_names(N), ana, fd):
            rel = abs(a - f) / max(abs(f), floor)
            if abs(f) > floor:
                worst = max(worst, rel)
            lines.append(f"{name},{_r(a)},{_r(f)},{_r(rel)}")
        result["extra_files"]["gradient_check.csv"] = lines
        result["summary"] += [
            f"fd_mode {cfg.fd.mode}",
            f"fd_h {_r(cfg.fd.h)}",
            f"max_rel_err {_r(worst)}",
        ]
    elif cfg.mode == "HESSIAN_PROBE":
        lines = ["mode,delta,value"]
        values = []
        for name, mode in zip(_mode_names(N), basis_modes(N)):
            val = hessian_probe(problem, b0, mp, mode, cfg.probe_delta)
            values.append(val)
            lines.append(f"{name},{_r(cfg.probe_delta)},{_r(val)}")
        result["extra_files"]["hessian_probe.csv"] = lines
        result["summary"] += [
            f"probe_delta {_r(cfg.probe_delta)}",
            f"min_probe {_r(min(values))}",
        ]
    elif cfg.mode != "SINGLE_EVAL":
        raise ConfigError(f"unhandled mode {cfg.mode!r}")
    return result


def _write_run(cfg, result, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _trajectory_rows(cfg, result["iterates"], result["objectives"], result["steps"])
    (out_dir / "trajectory.csv").write_text("\n".join(rows) + "\n")
    b_init = boundary_from_coefficients(result["iterates"][0], cfg.N)
    b_fin = boundary_from_coefficients(result["iterates"][-1], cfg.N)
    write_polyline_csv(out_dir / "boundary_initial.csv", sample_polyline(b_init, cfg.cnt2))
    write_polyline_csv(out_dir / "boundary_final.csv", sample_polyline(b_fin, cfg.cnt2))
    coeffs = " ".join(_r(c) for c in result["iterates"][-1])
    lines = result["summary"] + [f"final_coefficients {coeffs}"]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    for name, content in result["extra_files"].items():
        (out_dir / name).write_text("\n".join(content) + "\n")


def run_config(cfg, out_dir=None):
    """Execute one config and write its artifact files; returns the result."""
    out_dir = _resolve_out(cfg.out) if out_dir is None else Path(out_dir)
    result = _execute(cfg)
    _write_run(cfg, result, out_dir)
    return result


def _parse_int_values(tokens):
    vals = []
    for tok in tokens:
        if ".." in tok:
            lo, _, hi = tok.partition("..")
            try:
                lo, hi = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"bad range {tok!r}") from None
            if hi < lo:
                raise ConfigError(f"empty range {tok!r}")
            vals.extend(range(lo, hi + 1))
        else:
            try:
                vals.append(int(tok))
            except ValueError:
                raise ConfigError(f"bad value {tok!r}") from None
    return vals


def _parse_pair_values(tokens):
    vals = []
    for tok in tokens:
        c1, sep, c2 = tok.partition(":")
        if not sep:
            raise ConfigError(f"bad cnt pair {tok!r} (want 'cnt1:cnt2')")
        try:
            vals.append((int(c1), int(c2)))
        except ValueError:
            raise ConfigError(f"bad cnt pair {tok!r}") from None
    return vals


def sweep_config(cfg, param, tokens):
    """Run the config once per value; returns (rows, failures)."""
    if not tokens:
        raise ConfigError("sweep needs at least one value")
    base_out = _resolve_out(cfg.out)
    runs = []
    if param == "N":
        for v in _parse_int_values(tokens):
            runs.append((str(v), dataclasses.replace(cfg, N=v), base_out / f"N_{v}"))
    elif param == "cnt_pair":
        for c1, c2 in _parse_pair_values(tokens):
            sub = dataclasses.replace(cfg, cnt1=c1, cnt2=c2)
            runs.append((f"{c1}:{c2}", sub, base_out / f"cnt_{c1}_{c2}"))
    else:
        raise ConfigError("sweep parameter must be N or cnt_pair")

    rows = ["value,initial_J,iterations,final_J"]
    failures = 0
    for label, sub, out_dir in runs:
        try:
            result = run_config(sub, out_dir=out_dir)
        except (ConfigError,) + _RUNTIME_ERRORS as exc:
            print(f"sweep value {label}: failed: {exc}", file=sys.stderr)
            rows.append(f"{label},nan,nan,nan")
            failures += 1
            continue
        rows.append(
            f"{label},{_r(result['objectives'][0])},{len(result['steps'])},"
            f"{_r(result['objectives'][-1])}"
        )
    base_out.mkdir(parents=True, exist_ok=True)
    (base_out / "sweep.csv").write_text("\n".join(rows) + "\n")
    return rows, failures


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="freebound",
        description="Free-boundary shape optimization experiment harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config")
    p_sweep = sub.add_parser("sweep", help="run a config across parameter values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True, choices=("N", "cnt_pair"))
    p_sweep.add_argument("--values", required=True, nargs="+",
                         help="N: integers or lo..hi ranges; cnt_pair: cnt1:cnt2")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        try:
            result = run_config(cfg)
        except _RUNTIME_ERRORS as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        for line in result["summary"]:
            print(line)
        return 0

    try:
        rows, failures = sweep_config(cfg, args.param, args.values)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in rows:
        print(line)
    return 0 if failures < len(rows) - 1 else 1


if __name__ == "__main__":
    raise SystemExit(main())
