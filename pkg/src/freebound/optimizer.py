"""Gradient descent with adaptive step growth and a step-size stopping rule.

The loop is deliberately simple: one gradient per accepted step, trial steps
along the fixed descent direction, step size growing by 1/beta1 after a
success and shrinking by beta2 after a failure, and termination once the
step size falls under the floor epsilon.  The objective and gradient are
plain callbacks on coefficient vectors, so the module knows nothing about
meshes or PDE solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OptimizerError", "DescentParams", "OptTrajectory", "descend"]


class OptimizerError(Exception):
    pass


@dataclass(frozen=True)
class DescentParams:
    """Step-size schedule: grow by 1/beta1, shrink by beta2, stop under epsilon."""

    alpha0: float = 0.005
    beta1: float = 2.0 / 3.0
    beta2: float = 0.5
    epsilon: float = 1e-4
    max_iters: int = 200

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not 0.0 < self.beta1 < 1.0:
            raise ValueError("beta1 must lie in (0, 1)")
        if not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta2 must lie in (0, 1)")
        if not 0.0 < self.epsilon < self.alpha0:
            raise ValueError("epsilon must lie in (0, alpha0)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class OptTrajectory:
    """Record of a descent run.

    iterates[0] is the initial point; step_sizes[k] is the accepted step
    that produced iterates[k+1], so len(step_sizes) == len(iterates) - 1.
    objective_values aligns with iterates and is strictly decreasing.
    """

    iterates: list = field(default_factory=list)
    objective_values: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    stop_reason: str = "MAX_ITERS"

    @property
    def accepted_steps(self):
        return len(self.step_sizes)


def _finite_or_raise(value, what):
    v = float(value)
    if np.isnan(v):
        raise OptimizerError(f"{what} evaluated to NaN")
    return v


def descend(objective, gradient, x0, params):
    """Minimize `objective` from `x0`; returns the trajectory.

    Per accepted step: z = objective(x - alpha*g) with g = gradient(x) held
    fixed; z < F accepts the tested trial and grows alpha <- alpha/beta1 for
    the next iteration; z >= F shrinks alpha <- alpha*beta2 and retries; the
    run stops once alpha < epsilon (STEP_FLOOR) or after max_iters accepted
    steps (MAX_ITERS).  A trial objective of +inf counts as non-improving
    (infeasible trial shapes are reported that way); NaN objective values
    and non-finite gradients abort with a diagnostic.
    """
    if not isinstance(params, DescentParams):
        raise TypeError("params must be a DescentParams")
    x = np.asarray(x0, dtype=float).copy()
    if x.ndim != 1:
        raise ValueError("x0 must be a flat coefficient vector")
    F = _finite_or_raise(objective(x), "objective at the initial point")
    if np.isinf(F):
        raise OptimizerError("objective at the initial point is not finite")

    traj = OptTrajectory()
    traj.iterates.append(x.copy())
    traj.objective_values.append(F)

    alpha = float(params.alpha0)
    for _ in range(params.max_iters):
        g = np.asarray(gradient(x), dtype=float)
        if g.shape != x.shape:
            raise OptimizerError("gradient shape does not match the iterate")
        if not np.all(np.isfinite(g)):
            raise OptimizerError("gradient is not finite")

        accepted = False
        while alpha >= params.epsilon:
            trial = x - alpha * g
            z = _finite_or_raise(objective(trial), "trial objective")
            if z < F:
                x, F = trial, z
                traj.iterates.append(x.copy())
                traj.objective_values.append(F)
                traj.step_sizes.append(alpha)
                alpha = alpha / params.beta1
                accepted = True
                break
            alpha = alpha * params.beta2
        if not accepted:
            traj.stop_reason = "STEP_FLOOR"
            return traj
    traj.stop_reason = "MAX_ITERS"
    return traj
