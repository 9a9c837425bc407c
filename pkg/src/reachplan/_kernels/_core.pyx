# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Khachiyan MVEE iteration and polar barrier targets."""

from libc.math cimport atan2, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def khachiyan_weights(cnp.ndarray[double, ndim=2] P, double tol, int max_iter):
    """Khachiyan barycentric-coordinate iteration for the 2-D MVEE."""
    cdef Py_ssize_t n = P.shape[0]
    cdef cnp.ndarray[double, ndim=1] u_arr = np.full(n, 1.0 / n)
    cdef double[:, :] p = np.ascontiguousarray(P)
    cdef double[:] u = u_arr
    cdef double x00, x01, x02, x11, x12, x22
    cdef double c00, c01, c02, c11, c12, c22, det
    cdef double mi, mmax, step, w, qx, qy
    cdef Py_ssize_t i, j, it

    for it in range(max_iter):
        x00 = x01 = x02 = x11 = x12 = x22 = 0.0
        for i in range(n):
            w = u[i]
            qx = p[i, 0]
            qy = p[i, 1]
            x00 += w * qx * qx
            x01 += w * qx * qy
            x02 += w * qx
            x11 += w * qy * qy
            x12 += w * qy
            x22 += w
        # Cofactor inverse of the symmetric 3x3 moment matrix.
        c00 = x11 * x22 - x12 * x12
        c01 = x02 * x12 - x01 * x22
        c02 = x01 * x12 - x02 * x11
        c11 = x00 * x22 - x02 * x02
        c12 = x01 * x02 - x00 * x12
        c22 = x00 * x11 - x01 * x01
        det = x00 * c00 + x01 * c01 + x02 * c02
        if det == 0.0:
            break
        mmax = -1.0
        j = 0
        for i in range(n):
            qx = p[i, 0]
            qy = p[i, 1]
            mi = (qx * (c00 * qx + c01 * qy + c02)
                  + qy * (c01 * qx + c11 * qy + c12)
                  + (c02 * qx + c12 * qy + c22)) / det
            if mi > mmax:
                mmax = mi
                j = i
        if mmax <= 3.0 * (1.0 + tol):
            break
        step = (mmax - 3.0) / (3.0 * (mmax - 1.0))
        for i in range(n):
            u[i] *= 1.0 - step
        u[j] += step
    return u_arr


def polar_targets(cnp.ndarray[double, ndim=2] dx, cnp.ndarray[double, ndim=2] dy,
                  cnp.ndarray[double, ndim=2] lx, cnp.ndarray[double, ndim=2] ly,
                  double alpha, cnp.ndarray[double, ndim=2] d_prev):
    """Repulsion angles and distance targets for one solver iteration.

    Targets relax toward the boundary at rate alpha from the previous
    iteration's targets, floored at the actual normalized distance."""
    cdef Py_ssize_t N = dx.shape[0]
    cdef Py_ssize_t M = dx.shape[1]
    cdef cnp.ndarray[double, ndim=2] omega = np.empty((N, M))
    cdef cnp.ndarray[double, ndim=2] d = np.empty((N, M))
    cdef double[:, :] vdx = dx, vdy = dy, vlx = lx, vly = ly
    cdef double[:, :] vom = omega, vd = d, vdp = d_prev
    cdef double d_hat, env
    cdef Py_ssize_t k, h

    for h in range(M):
        for k in range(N):
            vom[k, h] = atan2(vlx[k, h] * vdy[k, h], vly[k, h] * vdx[k, h])
            d_hat = sqrt((vdx[k, h] / vlx[k, h]) ** 2 + (vdy[k, h] / vly[k, h]) ** 2)
            env = 1.0 + (1.0 - alpha) * (vdp[k, h] - 1.0)
            vd[k, h] = d_hat if d_hat > env else env
    return omega, d
