"""Pure-NumPy reference implementations of the compiled kernels."""

import numpy as np


def khachiyan_weights(P, tol, max_iter):
    """Khachiyan barycentric-coordinate iteration for the 2-D MVEE.

    Returns the weight vector u with sum(u) = 1; the enclosing ellipsoid is
    recovered from the weighted second moments of the points.
    """
    P = np.ascontiguousarray(P, dtype=float)
    n, d = P.shape
    Q = np.column_stack([P, np.ones(n)])
    u = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        X = Q.T @ (u[:, None] * Q)
        try:
            Xinv = np.linalg.inv(X)
        except np.linalg.LinAlgError:
            Xinv = np.linalg.inv(X + 1e-12 * np.eye(d + 1))
        M = np.einsum("ij,jk,ik->i", Q, Xinv, Q)
        j = int(np.argmax(M))
        maximum = M[j]
        if maximum <= (d + 1) * (1.0 + tol):
            break
        step = (maximum - d - 1.0) / ((d + 1.0) * (maximum - 1.0))
        u *= 1.0 - step
        u[j] += step
    return u


def polar_targets(dx, dy, lx, ly, alpha, d_prev):
    """Repulsion angles and distance targets for one solver iteration.

    dx, dy: (N, M) offsets of trajectory points from obstacle centers.
    lx, ly: (N, M) semi-axes.  d_prev: (N, M) distance targets from the
    previous iteration.  The new target relaxes toward the boundary at rate
    alpha, d = max(d_hat, 1 + (1 - alpha) * (d_prev - 1)), floored at the
    actual normalized distance d_hat so safe points feel no pull: violating
    points are pushed out gradually, far points are left untouched.
    """
    omega = np.arctan2(lx * dy, ly * dx)
    d_hat = np.sqrt((dx / lx) ** 2 + (dy / ly) ** 2)
    d = np.maximum(d_hat, 1.0 + (1.0 - alpha) * (d_prev - 1.0))
    return omega, d
