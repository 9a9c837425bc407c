"""Ellipsoid algebra: membership, containment, outer Minkowski sums, MVEE.

Every set handled by the planner (intent sets over accelerations, reachable-set
slices, occupancies, vehicle footprints) is an ellipsoid
``{x : (x - center)^T shape^{-1} (x - center) <= 1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from reachplan._kernels import khachiyan_weights

EPS_PD = 1e-10
EPS_REG = 1e-8


@dataclass(frozen=True)
class Ellipsoid:
    """Solid ellipsoid with positive-definite shape matrix.

    ``shape`` carries squared units of ``center``; eigenvalues below
    ``EPS_PD`` are rejected.
    """

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        shape = np.asarray(self.shape, dtype=float)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", shape)
        d = center.size
        if shape.shape != (d, d):
            raise ValueError(f"shape matrix {shape.shape} does not match center dim {d}")
        if not np.allclose(shape, shape.T, atol=1e-9):
            raise ValueError("shape matrix must be symmetric")
        if np.linalg.eigvalsh(shape).min() < EPS_PD:
            raise ValueError("shape matrix must be positive definite (eigenvalues >= 1e-10)")

    @property
    def dim(self) -> int:
        return self.center.size

    def transform(self, M: np.ndarray, offset: np.ndarray | None = None) -> "Ellipsoid":
        """Image under x -> M x + offset (M square, invertible)."""
        c = M @ self.center
        if offset is not None:
            c = c + offset
        return Ellipsoid(c, M @ self.shape @ M.T)

    def sample_boundary(self, n: int, rng=None) -> np.ndarray:
        """n points on the boundary (deterministic angular grid in 2-D)."""
        L = np.linalg.cholesky(self.shape)
        if self.dim == 2 and rng is None:
            t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
            u = np.stack([np.cos(t), np.sin(t)], axis=1)
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            u = rng.standard_normal((n, self.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + u @ L.T

    def sample_interior(self, n: int, rng) -> np.ndarray:
        """n points uniformly distributed inside the ellipsoid."""
        d = self.dim
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = rng.random(n) ** (1.0 / d)
        L = np.linalg.cholesky(self.shape)
        return self.center + (u * r[:, None]) @ L.T


@dataclass(frozen=True)
class AxisAlignedEllipse:
    """Axis-aligned ellipse given by center and strictly positive semi-axes."""

    center: np.ndarray
    semi_axes: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(2)
        semi = np.asarray(self.semi_axes, dtype=float).reshape(2)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "semi_axes", semi)
        if not np.all(semi > 0):
            raise ValueError("semi-axes must be strictly positive")

    def as_ellipsoid(self) -> Ellipsoid:
        return Ellipsoid(self.center, np.diag(self.semi_axes**2))


def mahalanobis(e: Ellipsoid, p: np.ndarray) -> float:
    """sqrt((p-c)^T shape^{-1} (p-c)); <= 1 iff p lies in e."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != e.dim:
        raise ValueError(f"point dim {p.size} != ellipsoid dim {e.dim}")
    r = p - e.center
    return float(np.sqrt(r @ np.linalg.solve(e.shape, r)))


def _homogeneous_form(e: Ellipsoid) -> np.ndarray:
    """Matrix M with [x;1]^T M [x;1] <= 0 iff x in e."""
    A = np.linalg.inv(e.shape)
    b = A @ e.center
    M = np.empty((e.dim + 1, e.dim + 1))
    M[: e.dim, : e.dim] = A
    M[: e.dim, -1] = -b
    M[-1, : e.dim] = -b
    M[-1, -1] = e.center @ b - 1.0
    return M


def contains(outer: Ellipsoid, inner: Ellipsoid, tol: float = 1e-9) -> bool:
    """True iff every point of inner lies in outer within tol.

    Exact via the S-procedure: inner is contained in outer iff there is a
    multiplier lam >= 0 with lam*M_inner - M_outer >= 0 in the homogeneous
    quadratic forms.  g(lam) = lambda_min(lam*M_inner - M_outer) is concave,
    so a 1-D scalar maximization settles the question.
    """
    if outer.dim != inner.dim:
        raise ValueError("dimension mismatch")
    Mo = _homogeneous_form(outer)
    Mi = _homogeneous_form(inner)

    def neg_g(lam):
        return -np.linalg.eigvalsh(lam * Mi - Mo).min()

    # The feasible multiplier lives in a bounded interval; bracket generously.
    scale = max(np.linalg.eigvalsh(Mo).max() / max(-np.linalg.eigvalsh(Mi).min(), 1e-12), 1.0)
    res = minimize_scalar(neg_g, bounds=(0.0, 10.0 * scale), method="bounded",
                          options={"xatol": 1e-12})
    best = -min(res.fun, neg_g(1.0))
    return bool(best >= -tol)


def minkowski_outer(e1: Ellipsoid, e2: Ellipsoid) -> Ellipsoid:
    """Outer ellipsoidal bound of the Minkowski sum e1 (+) e2.

    Uses the containment-valid family (1+1/t)*S1 + (1+t)*S2 with the
    trace-optimal t = rho2/rho1, rho_i = sqrt(trace(S_i)); sound for every
    direction simultaneously.
    """
    if e1.dim != e2.dim:
        raise ValueError("dimension mismatch")
    rho1 = np.sqrt(np.trace(e1.shape))
    rho2 = np.sqrt(np.trace(e2.shape))
    kappa = rho1 + rho2
    shape = kappa * (e1.shape / rho1 + e2.shape / rho2)
    return Ellipsoid(e1.center + e2.center, 0.5 * (shape + shape.T))


def project_position(e: Ellipsoid) -> Ellipsoid:
    """Exact shadow onto the leading two coordinates of a 4-D state ellipsoid."""
    if e.dim != 4:
        raise ValueError("position projection expects a 4-D state ellipsoid")
    return Ellipsoid(e.center[:2], e.shape[:2, :2])


def axis_aligned_outer(e: Ellipsoid) -> AxisAlignedEllipse:
    """Axis-aligned outer ellipse of a 2-D ellipsoid.

    For rotated shapes uses the sqrt(2)-inflated diagonal bound, which is
    certified: x1^2/(2*S11) + x2^2/(2*S22) <= 1 whenever x in e.  Already
    axis-aligned shapes pass through exactly.
    """
    if e.dim != 2:
        raise ValueError("expected a 2-D ellipsoid")
    S = e.shape
    if abs(S[0, 1]) < 1e-12:
        semi = np.sqrt(np.array([S[0, 0], S[1, 1]]))
    else:
        semi = np.sqrt(2.0 * np.array([S[0, 0], S[1, 1]]))
    return AxisAlignedEllipse(e.center, semi)


def volume(e: Ellipsoid) -> float:
    """Area pi*sqrt(det(shape)) of a 2-D ellipsoid."""
    if e.dim != 2:
        raise ValueError("volume is defined for 2-D ellipsoids")
    return float(np.pi * np.sqrt(np.linalg.det(e.shape)))


def mvee(points, tol: float = 1e-6, max_iter: int = 10000) -> Ellipsoid:
    """Minimum-volume enclosing ellipsoid of 2-D points (Khachiyan iteration).

    The returned ellipsoid contains every input point; its volume is within
    the (1+tol)*d first-order optimality guarantee of the true minimum.
    Degenerate point sets are regularized by EPS_REG * I.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.size == 0:
        raise ValueError("mvee needs at least one point")
    if P.shape[1] != 2:
        raise ValueError("mvee expects 2-D points")
    n = P.shape[0]
    if n == 1 or np.allclose(P, P[0], atol=1e-15):
        return Ellipsoid(P[0], EPS_REG * np.eye(2))

    u = khachiyan_weights(P, tol, max_iter)
    c = u @ P
    S = 2.0 * ((P.T * u) @ P - np.outer(c, c))
    S = 0.5 * (S + S.T) + EPS_REG * np.eye(2)
    # Rescale so all points are strictly enclosed despite first-order slack.
    r = P - c
    m2 = np.einsum("ij,ij->i", r @ np.linalg.inv(S), r).max()
    if m2 > 1.0:
        S = S * m2
    return Ellipsoid(c, S)


def _min_axis_b(a: float, t: float) -> float:
    """Smallest b so that the ellipse ((x-t)/a)^2 + (y/b)^2 <= 1 holds the unit ball.

    The active tangency abscissa solves t*c^2 + (a^2-1-t^2)*c + t = 0.
    """
    if t < 1e-14:
        return 1.0
    q = a**2 - 1.0 - t**2
    disc = q * q - 4.0 * t * t
    if disc <= 0.0:
        # Tangency at the pole x = -1: b from the endpoint condition.
        c = -1.0
    else:
        c = (-q + np.sqrt(disc)) / (2.0 * t)
        c = min(max(c, -1.0), 0.0)
    den = 1.0 - (c - t) ** 2 / a**2
    if den <= 0.0:
        return np.inf
    b2 = (1.0 - c * c) / den
    # Endpoints of the ball must fit as well.
    if (1.0 - t) ** 2 > a**2 or (1.0 + t) ** 2 > a**2:
        return np.inf
    return float(np.sqrt(max(b2, 1.0)))


def enclose_point(e: Ellipsoid, u) -> Ellipsoid:
    """Smallest-volume ellipsoid (within the axis-symmetric family) holding e and u.

    Points already inside return e unchanged.  Otherwise e is whitened to the
    unit ball, the exterior point maps to distance r > 1, and a 1-D search
    over the center offset t in [0, (r-1)/2] finds the minimal product of
    semi-axes with both containment constraints active.  By symmetry of the
    true optimum about the axis through u, this family contains it.
    """
    if e.dim != 2:
        raise ValueError("enclose_point expects a 2-D ellipsoid")
    u = np.asarray(u, dtype=float).reshape(2)
    if mahalanobis(e, u) <= 1.0 + 1e-12:
        return e
    L = np.linalg.cholesky(e.shape)
    uh = np.linalg.solve(L, u - e.center)
    r = float(np.linalg.norm(uh))
    direction = uh / r

    def area(t):
        a = r - t
        b = _min_axis_b(a, t)
        return a * b

    res = minimize_scalar(area, bounds=(0.0, (r - 1.0) / 2.0), method="bounded",
                          options={"xatol": 1e-12})
    t = float(res.x)
    if area(t) > area((r - 1.0) / 2.0):
        t = (r - 1.0) / 2.0
    a = r - t
    b = _min_axis_b(a, t)

    # Un-whiten: rotate the axis-aligned solution onto the u direction.
    R = np.array([[direction[0], -direction[1]], [direction[1], direction[0]]])
    S_white = R @ np.diag([a**2, b**2]) @ R.T
    center = e.center + L @ (t * direction)
    return Ellipsoid(center, L @ S_white @ L.T)
