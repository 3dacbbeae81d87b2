"""Flat key=value experiment configuration.

One `key = value` pair per line, `#` starts a comment.  Fixed key names:

    f, g, h              field registry entries (see fields.parse_field_spec)
    sigma.kind           circle | polygon
    sigma.cx sigma.cy    circle center (default 0)
    sigma.r              circle radius
    sigma.vertices       polygon vertices "x1,y1; x2,y2; ..."
    init.a0 ... init.aN  initial cosine coefficients (missing keys are 0)
    init.b1 ... init.bN  initial sine coefficients
    N                    Fourier truncation order
    cnt1, cnt2           Sigma / Gamma boundary point counts
    opt.alpha0 opt.beta1 opt.beta2 opt.eps opt.max_iters   descent schedule
    mode                 OPTIMIZE | GRAD_CHECK | HESSIAN_PROBE | SINGLE_EVAL
    out                  output directory (relative paths may be rerooted by
                         the FREEBOUND_OUT_ROOT environment variable)
    fd.h, fd.mode        finite-difference step / mode for GRAD_CHECK
    probe.delta          probe step for HESSIAN_PROBE
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .fields import parse_field_spec
from .geometry import FixedBoundarySpec, FourierBoundary
from .meshing import MeshParams
from .optimizer import DescentParams
from .shape_calculus import ProblemData
from .validation import MORPH, REMESH, FdParams

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_config_text"]

MODES = ("OPTIMIZE", "GRAD_CHECK", "HESSIAN_PROBE", "SINGLE_EVAL")

_SCALAR_KEYS = {
    "f", "g", "h", "sigma.kind", "sigma.cx", "sigma.cy", "sigma.r",
    "sigma.vertices", "N", "cnt1", "cnt2", "opt.alpha0", "opt.beta1",
    "opt.beta2", "opt.eps", "opt.max_iters", "mode", "out",
    "fd.h", "fd.mode", "probe.delta",
}
_INIT_RE = re.compile(r"^init\.([ab])(\d+)$")


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Validated experiment description; see the module docstring for keys."""

    f_spec: object
    g_spec: object
    h_spec: object
    sigma: FixedBoundarySpec
    init_terms: dict
    N: int
    cnt1: int
    cnt2: int
    descent: DescentParams
    mode: str
    out: str
    fd: FdParams = field(default_factory=FdParams)
    probe_delta: float = 1e-2

    def problem(self):
        return ProblemData(f_spec=self.f_spec, g_spec=self.g_spec,
                           h_spec=self.h_spec, sigma=self.sigma)

    def initial_coefficients(self):
        """(2N+1,) vector (a0..aN, b1..bN) from the init.* terms."""
        x = np.zeros(2 * self.N + 1)
        for (kind, k), v in self.init_terms.items():
            if kind == "a":
                if k > self.N:
                    raise ConfigError(f"init.a{k} exceeds N={self.N}")
                x[k] = v
            else:
                if not 1 <= k <= self.N:
                    raise ConfigError(f"init.b{k} outside 1..N={self.N}")
                x[self.N + k] = v
        return x

    def initial_boundary(self):
        return boundary_from_coefficients(self.initial_coefficients(), self.N)

    def mesh_params(self):
        return MeshParams(cnt1=self.cnt1, cnt2=self.cnt2)


def boundary_from_coefficients(x, N):
    """FourierBoundary from the flat (a0..aN, b1..bN) vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * N + 1,):
        raise ValueError(f"coefficient vector must have length {2 * N + 1}")
    return FourierBoundary(a=x[: N + 1], b=x[N + 1:])


def _parse_pairs(text):
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ConfigError(f"bad vertex {chunk!r} (want 'x,y')")
        try:
            pts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError(f"bad vertex {chunk!r}") from None
    if len(pts) < 3:
        raise ConfigError("sigma.vertices needs at least 3 points")
    return pts


def _get(raw, key, conv, default=None, required=False):
    if key not in raw:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return conv(raw[key])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def parse_config_text(text, name="<config>"):
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{name}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key in raw:
            raise ConfigError(f"{name}:{lineno}: duplicate key {key!r}")
        if key not in _SCALAR_KEYS and not _INIT_RE.match(key):
            raise ConfigError(f"{name}:{lineno}: unknown key {key!r}")
        raw[key] = value

    init_terms = {}
    for key, value in raw.items():
        m = _INIT_RE.match(key)
        if not m:
            continue
        try:
            init_terms[(m.group(1), int(m.group(2)))] = float(value)
        except ValueError:
            raise ConfigError(f"bad value for {key!r}") from None

    def fieldspec(v):
        return parse_field_spec(v)

    f_spec = _get(raw, "f", fieldspec, required=True)
    g_spec = _get(raw, "g", fieldspec, required=True)
    h_spec = _get(raw, "h", fieldspec, required=True)

    kind = _get(raw, "sigma.kind", str, required=True).lower()
    if kind == "circle":
        cx = _get(raw, "sigma.cx", float, default=0.0)
        cy = _get(raw, "sigma.cy", float, default=0.0)
        r = _get(raw, "sigma.r", float, required=True)
        if not r > 0:
            raise ConfigError("sigma.r must be positive")
        sigma = FixedBoundarySpec.circle((cx, cy), r)
    elif kind == "polygon":
        verts = _get(raw, "sigma.vertices", _parse_pairs, required=True)
        sigma = FixedBoundarySpec.polygon(verts)
    else:
        raise ConfigError(f"sigma.kind must be circle or polygon, got {kind!r}")

    N = _get(raw, "N", int, required=True)
    if N < 0:
        raise ConfigError("N must be >= 0")
    cnt1 = _get(raw, "cnt1", int, required=True)
    cnt2 = _get(raw, "cnt2", int, required=True)
    if cnt1 < 8 or cnt2 < 8:
        raise ConfigError("cnt1 and cnt2 must be >= 8")

    try:
        descent = DescentParams(
            alpha0=_get(raw, "opt.alpha0", float, default=0.005),
            beta1=_get(raw, "opt.beta1", float, default=2.0 / 3.0),
            beta2=_get(raw, "opt.beta2", float, default=0.5),
            epsilon=_get(raw, "opt.eps", float, default=1e-4),
            max_iters=_get(raw, "opt.max_iters", int, default=200),
        )
    except ValueError as exc:
        raise ConfigError(f"bad descent parameters: {exc}") from None

    mode = _get(raw, "mode", str, default="OPTIMIZE").upper()
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}")
    out = _get(raw, "out", str, required=True)
    if not out:
        raise ConfigError("out must be a nonempty path")

    fd_mode = _get(raw, "fd.mode", str, default=MORPH).upper()
    if fd_mode not in (MORPH, REMESH):
        raise ConfigError("fd.mode must be MORPH or REMESH")
    try:
        fd = FdParams(h=_get(raw, "fd.h", float, default=1e-4), mode=fd_mode)
    except ValueError as exc:
        raise ConfigError(f"bad fd parameters: {exc}") from None
    probe_delta = _get(raw, "probe.delta", float, default=1e-2)
    if not probe_delta > 0:
        raise ConfigError("probe.delta must be positive")

    cfg = ExperimentConfig(
        f_spec=f_spec, g_spec=g_spec, h_spec=h_spec, sigma=sigma,
        init_terms=init_terms, N=N, cnt1=cnt1, cnt2=cnt2, descent=descent,
        mode=mode, out=out, fd=fd, probe_delta=probe_delta,
    )
    cfg.initial_coefficients()  # validates init.* indices against N
    return cfg


def parse_config(path):
    """Parse and validate the config file at `path`."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config_text(text, name=str(path))
