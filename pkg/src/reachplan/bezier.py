"""Bernstein-basis machinery for trajectory parameterization.

Trajectories are degree-n Bezier curves per axis (x, y, heading) over a
normalized horizon; derivatives come from the hodograph property, so
velocity/acceleration/jerk constraints are linear in the control points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import comb

MAX_ORDER = 15  # direct binomial evaluation is ill-conditioned past this


def _bernstein_matrix(n: int, nu: np.ndarray) -> np.ndarray:
    """(n+1) x len(nu) matrix of Bernstein basis values."""
    j = np.arange(n + 1)[:, None]
    nu = np.asarray(nu, dtype=float)[None, :]
    return comb(n, j) * nu**j * (1.0 - nu) ** (n - j)


def _diff_matrix(n: int, T: float) -> np.ndarray:
    """Maps degree-n control points to degree-(n-1) hodograph control points."""
    D = np.zeros((n, n + 1))
    idx = np.arange(n)
    D[idx, idx] = -n / T
    D[idx, idx + 1] = n / T
    return D


@dataclass(frozen=True)
class BernsteinBasis:
    order: int
    horizon: int
    duration: float
    B0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    B3: np.ndarray


def build_basis(n: int, N: int, T: float) -> BernsteinBasis:
    """Evaluation matrices for the curve and its first three time derivatives
    at the uniform grid nu_k = k/N, with 1/T scaling per differentiation order.
    """
    if n < 3 or N < 1 or T <= 0:
        raise ValueError("need order >= 3, horizon >= 1, positive duration")
    if n > MAX_ORDER:
        raise ValueError(f"order {n} > {MAX_ORDER} rejected (ill-conditioned)")
    nu = np.arange(N + 1) / N
    B0 = _bernstein_matrix(n, nu)
    D1 = _diff_matrix(n, T)
    D2 = _diff_matrix(n - 1, T) @ D1
    D3 = _diff_matrix(n - 2, T) @ D2
    B1 = D1.T @ _bernstein_matrix(n - 1, nu)
    B2 = D2.T @ _bernstein_matrix(n - 2, nu)
    B3 = D3.T @ _bernstein_matrix(n - 3, nu)
    return BernsteinBasis(order=n, horizon=N, duration=T, B0=B0, B1=B1, B2=B2, B3=B3)


@dataclass(frozen=True)
class BranchCurve:
    """Control points of one trajectory branch: x, y, heading."""

    c_x: np.ndarray
    c_y: np.ndarray
    c_theta: np.ndarray


@dataclass(frozen=True)
class DualBranchTrajectory:
    nominal: BranchCurve
    contingency: BranchCurve
    basis: BernsteinBasis


def reconstruct_states(curve: BranchCurve, basis: BernsteinBasis) -> np.ndarray:
    """(N+1, 9) states [px, py, theta, theta_dot, v, ax, ay, jx, jy].

    Speed is sqrt(x_dot^2 + y_dot^2), the closed-form consistent with the
    nonholonomic kinematics.
    """
    px = basis.B0.T @ curve.c_x
    py = basis.B0.T @ curve.c_y
    vx = basis.B1.T @ curve.c_x
    vy = basis.B1.T @ curve.c_y
    theta = basis.B0.T @ curve.c_theta
    theta_dot = basis.B1.T @ curve.c_theta
    v = np.hypot(vx, vy)
    ax = basis.B2.T @ curve.c_x
    ay = basis.B2.T @ curve.c_y
    jx = basis.B3.T @ curve.c_x
    jy = basis.B3.T @ curve.c_y
    return np.column_stack([px, py, theta, theta_dot, v, ax, ay, jx, jy])


def fit_curve(pos: np.ndarray, vel: np.ndarray, acc: np.ndarray,
              basis: BernsteinBasis) -> tuple[np.ndarray, float]:
    """Least-squares control points reproducing sampled position/velocity/
    acceleration rows on the basis grid.

    Returns (control_points, residual) where residual is the max absolute
    position error of the fit; rank-deficient stacks fall back to the
    minimum-norm solution.
    """
    pos = np.asarray(pos, dtype=float)
    K = pos.size
    stack = np.vstack([basis.B0.T[:K], basis.B1.T[:K], basis.B2.T[:K]])
    rhs = np.concatenate([pos, np.asarray(vel, dtype=float)[:K],
                          np.asarray(acc, dtype=float)[:K]])
    c, *_ = np.linalg.lstsq(stack, rhs, rcond=None)
    residual = float(np.max(np.abs(basis.B0.T[:K] @ c - pos)))
    return c, residual


def line_control_points(p0: float, v0: float, basis: BernsteinBasis) -> np.ndarray:
    """Control points of the straight line p0 + v0 * t over the horizon."""
    j = np.arange(basis.order + 1)
    return p0 + v0 * basis.duration * j / basis.order
