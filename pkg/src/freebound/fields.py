"""Closed-form data functions f, g, h with analytic gradients.

Every entry exposes value(points) -> (n,) and gradient(points) -> (n, 2) so
normal derivatives like dg/dn are exact.  An optional boundary_value(points,
normals) hook lets normal-dependent Neumann data (used by patch tests)
plug into the boundary assembly; it defaults to value(points).
"""

from __future__ import annotations

import numpy as np

__all__ = ["Constant", "LogDistance", "Polynomial", "parse_field_spec", "boundary_values"]


class Constant:
    """f(x) = c."""

    def __init__(self, c):
        self.c = float(c)

    def value(self, points):
        return np.full(len(np.atleast_2d(points)), self.c)

    def gradient(self, points):
        return np.zeros((len(np.atleast_2d(points)), 2))

    def __repr__(self):
        return f"Constant({self.c!r})"


class LogDistance:
    """f(x) = -C * log sqrt((x-x0)^2 + (y-y0)^2); singular at (x0, y0)."""

    def __init__(self, C=1.0, x0=0.0, y0=0.0):
        self.C = float(C)
        self.x0 = float(x0)
        self.y0 = float(y0)

    def _d2(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        dx = p[:, 0] - self.x0
        dy = p[:, 1] - self.y0
        return dx, dy, dx * dx + dy * dy

    def value(self, points):
        _, _, d2 = self._d2(points)
        if np.any(d2 == 0.0):
            raise ValueError("log-distance field evaluated at its singular point")
        return -0.5 * self.C * np.log(d2)

    def gradient(self, points):
        dx, dy, d2 = self._d2(points)
        if np.any(d2 == 0.0):
            raise ValueError("log-distance field evaluated at its singular point")
        return np.stack([-self.C * dx / d2, -self.C * dy / d2], axis=-1)

    def __repr__(self):
        return f"LogDistance(C={self.C!r}, x0={self.x0!r}, y0={self.y0!r})"


class Polynomial:
    """f(x, y) = sum_k c_k * x^i_k * y^j_k, given as {(i, j): c} terms."""

    def __init__(self, terms):
        self.terms = {(int(i), int(j)): float(c) for (i, j), c in dict(terms).items()}
        if any(i < 0 or j < 0 for i, j in self.terms):
            raise ValueError("polynomial powers must be nonnegative")

    def value(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(p))
        for (i, j), c in self.terms.items():
            out += c * p[:, 0] ** i * p[:, 1] ** j
        return out

    def gradient(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        gx = np.zeros(len(p))
        gy = np.zeros(len(p))
        for (i, j), c in self.terms.items():
            if i > 0:
                gx += c * i * p[:, 0] ** (i - 1) * p[:, 1] ** j
            if j > 0:
                gy += c * j * p[:, 0] ** i * p[:, 1] ** (j - 1)
        return np.stack([gx, gy], axis=-1)

    def __repr__(self):
        return f"Polynomial({self.terms!r})"


def boundary_values(spec, points, normals):
    """Boundary trace used by Neumann assembly; honors boundary_value hooks."""
    hook = getattr(spec, "boundary_value", None)
    if hook is not None:
        return np.asarray(hook(points, normals), dtype=float)
    return np.asarray(spec.value(points), dtype=float)


def parse_field_spec(text):
    """Parse a registry entry from its config syntax.

    constant:<c>
    log_distance:C=<c>,x0=<x>,y0=<y>      (parameters optional)
    polynomial:<i>,<j>,<c>;<i>,<j>,<c>;...
    """
    text = text.strip()
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    arg = arg.strip()
    if name == "constant":
        try:
            return Constant(float(arg))
        except ValueError:
            raise ValueError(f"bad constant field spec: {text!r}") from None
    if name == "log_distance":
        params = {}
        if arg:
            for item in arg.split(","):
                key, _, val = item.partition("=")
                key = key.strip()
                if key not in ("C", "x0", "y0"):
                    raise ValueError(f"unknown log_distance parameter {key!r}")
                params[key] = float(val)
        return LogDistance(**params)
    if name == "polynomial":
        terms = {}
        for item in arg.split(";"):
            if not item.strip():
                continue
            parts = item.split(",")
            if len(parts) != 3:
                raise ValueError(f"bad polynomial term {item!r} (want i,j,c)")
            i, j, c = int(parts[0]), int(parts[1]), float(parts[2])
            terms[(i, j)] = terms.get((i, j), 0.0) + c
        if not terms:
            raise ValueError("polynomial field spec has no terms")
        return Polynomial(terms)
    raise ValueError(f"unknown field spec {text!r}")
