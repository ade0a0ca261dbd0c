# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: watertight ray/triangle tests, tableau pivoting and
Gaussian-mixture accumulation.

Every routine mirrors ``graspkit._fallback`` operation for operation so the
two backends agree to the last bit wherever libm agrees with numpy.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()


def ray_triangle_hits(double[::1] origin, double[::1] direction,
                      double[:, ::1] v0, double[:, ::1] v1, double[:, ::1] v2,
                      double t_tol):
    """Return ``(t, face)`` for every triangle hit by the ray, unsorted."""
    cdef Py_ssize_t nf = v0.shape[0]
    cdef Py_ssize_t i, kx, ky, kz, n_hit = 0
    cdef double sx, sy, sz, dz
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef double akz, bkz, ckz
    cdef double u, v, w, det, tt
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t_out = np.empty(nf, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] f_out = np.empty(nf, dtype=np.int64)

    kz = 0
    if fabs(direction[1]) > fabs(direction[kz]):
        kz = 1
    if fabs(direction[2]) > fabs(direction[kz]):
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if direction[kz] < 0.0:
        kx, ky = ky, kx
    dz = direction[kz]
    sx = direction[kx] / dz
    sy = direction[ky] / dz
    sz = 1.0 / dz

    for i in range(nf):
        akz = v0[i, kz] - origin[kz]
        bkz = v1[i, kz] - origin[kz]
        ckz = v2[i, kz] - origin[kz]
        ax = (v0[i, kx] - origin[kx]) - sx * akz
        ay = (v0[i, ky] - origin[ky]) - sy * akz
        bx = (v1[i, kx] - origin[kx]) - sx * bkz
        by = (v1[i, ky] - origin[ky]) - sy * bkz
        cx = (v2[i, kx] - origin[kx]) - sx * ckz
        cy = (v2[i, ky] - origin[ky]) - sy * ckz
        u = cx * by - cy * bx
        v = ax * cy - ay * cx
        w = bx * ay - by * ax
        if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
            continue
        det = u + v + w
        if det == 0.0:
            continue
        az = sz * akz
        bz = sz * bkz
        cz = sz * ckz
        tt = (u * az + v * bz + w * cz) / det
        if tt < -t_tol:
            continue
        t_out[n_hit] = tt
        f_out[n_hit] = i
        n_hit += 1
    return t_out[:n_hit].copy(), f_out[:n_hit].copy()


def simplex_iterate(double[:, ::1] tab, Py_ssize_t[::1] basis,
                    Py_ssize_t n_enter, double tol, Py_ssize_t max_iter):
    """Bland's-rule primal simplex on a dense tableau, in place.

    Last row holds reduced costs, last column the right-hand side.  Only
    columns ``< n_enter`` may enter.  Returns ``(status, iterations)`` with
    status 0 optimal, 1 unbounded, 2 iteration cap.
    """
    cdef Py_ssize_t m = tab.shape[0] - 1
    cdef Py_ssize_t nc = tab.shape[1]
    cdef Py_ssize_t rhs = nc - 1
    cdef Py_ssize_t it = 0
    cdef Py_ssize_t i, c, j, r
    cdef double a, q, best, piv, f

    while True:
        j = -1
        for c in range(n_enter):
            if tab[m, c] < -tol:
                j = c
                break
        if j < 0:
            return 0, it
        if it >= max_iter:
            return 2, it
        r = -1
        best = 0.0
        for i in range(m):
            a = tab[i, j]
            if a > tol:
                q = tab[i, rhs] / a
                if r < 0 or q < best or (q == best and basis[i] < basis[r]):
                    r = i
                    best = q
        if r < 0:
            return 1, it
        piv = tab[r, j]
        for c in range(nc):
            tab[r, c] = tab[r, c] / piv
        for i in range(m + 1):
            if i == r:
                continue
            f = tab[i, j]
            if f == 0.0:
                continue
            for c in range(nc):
                tab[i, c] = tab[i, c] - f * tab[r, c]
        basis[r] = j
        it += 1


def gaussian_mixture(double[:, ::1] points, double[:, ::1] centers,
                     double[::1] weights, double inv_two_sigma2):
    """Unnormalized ``sum_k w_k exp(-|p - c_k|^2 / (2 sigma^2))`` per point."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t k = centers.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, d2, s
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for j in range(k):
            dx = points[i, 0] - centers[j, 0]
            dy = points[i, 1] - centers[j, 1]
            dz = points[i, 2] - centers[j, 2]
            d2 = (dx * dx + dy * dy) + dz * dz
            s = s + weights[j] * exp(-d2 * inv_two_sigma2)
        out[i] = s
    return out
