"""Discrete barrier functions over axis-aligned ellipsoidal obstacles.

The barrier value is B = d - 1 with d the ellipse-normalized distance; the
step condition (d_{k+1} - 1) >= (1 - alpha)(d_k - 1) keeps the complement of
the obstacle forward invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import atan2, sqrt

from reachplan.ellipsoid import AxisAlignedEllipse


@dataclass(frozen=True)
class BarrierConfig:
    alpha: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


@dataclass(frozen=True)
class BarrierEval:
    d: float
    omega: float
    B_value: float


def eval_barrier(p, obs: AxisAlignedEllipse) -> BarrierEval:
    """Normalized distance and quadrant-correct repulsion angle at point p.

    The polar identities p = center + semi_axes * d * (cos w, sin w) hold
    exactly; the center itself maps to d = 0, w = 0 by convention.
    """
    dx = p[0] - obs.center[0]
    dy = p[1] - obs.center[1]
    lx, ly = obs.semi_axes
    d = sqrt((dx / lx) ** 2 + (dy / ly) ** 2)
    omega = atan2(lx * dy, ly * dx) if d > 0.0 else 0.0
    return BarrierEval(d=d, omega=omega, B_value=d - 1.0)


def barrier_step_residual(d_k: float, d_k1: float, alpha: float) -> float:
    """(d_{k+1} - 1) - (1 - alpha)(d_k - 1); nonnegative iff the step is safe."""
    return (d_k1 - 1.0) - (1.0 - alpha) * (d_k - 1.0)


def min_feasible_d(d_k: float, alpha: float) -> float:
    """Smallest next distance satisfying the barrier step.

    Below 1 when d_k < 1: a state inside the obstacle set is required to
    recover gradually rather than exit instantaneously.
    """
    return 1.0 + (1.0 - alpha) * (d_k - 1.0)
