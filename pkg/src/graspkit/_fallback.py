"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built or ``GRASPKIT_PURE=1`` is set.  The
arithmetic is written in the same order as the Cython loops.
"""
from __future__ import annotations

import numpy as np


def ray_triangle_hits(origin, direction, v0, v1, v2, t_tol):
    d = direction
    kz = 0
    if abs(d[1]) > abs(d[kz]):
        kz = 1
    if abs(d[2]) > abs(d[kz]):
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0.0:
        kx, ky = ky, kx
    dz = d[kz]
    sx = d[kx] / dz
    sy = d[ky] / dz
    sz = 1.0 / dz

    akz = v0[:, kz] - origin[kz]
    bkz = v1[:, kz] - origin[kz]
    ckz = v2[:, kz] - origin[kz]
    ax = (v0[:, kx] - origin[kx]) - sx * akz
    ay = (v0[:, ky] - origin[ky]) - sy * akz
    bx = (v1[:, kx] - origin[kx]) - sx * bkz
    by = (v1[:, ky] - origin[ky]) - sy * bkz
    cx = (v2[:, kx] - origin[kx]) - sx * ckz
    cy = (v2[:, ky] - origin[ky]) - sy * ckz
    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    neg = (u < 0.0) | (v < 0.0) | (w < 0.0)
    pos = (u > 0.0) | (v > 0.0) | (w > 0.0)
    det = u + v + w
    ok = ~(neg & pos) & (det != 0.0)
    idx = np.flatnonzero(ok)
    u, v, w, det = u[idx], v[idx], w[idx], det[idx]
    tt = (u * (sz * akz[idx]) + v * (sz * bkz[idx]) + w * (sz * ckz[idx])) / det
    keep = tt >= -t_tol
    return tt[keep].astype(np.float64), idx[keep].astype(np.int64)


def simplex_iterate(tab, basis, n_enter, tol, max_iter):
    m = tab.shape[0] - 1
    it = 0
    while True:
        cand = np.flatnonzero(tab[m, :n_enter] < -tol)
        if cand.size == 0:
            return 0, it
        if it >= max_iter:
            return 2, it
        j = int(cand[0])
        r = -1
        best = 0.0
        col = tab[:m, j]
        for i in np.flatnonzero(col > tol):
            q = tab[i, -1] / col[i]
            if r < 0 or q < best or (q == best and basis[i] < basis[r]):
                r = int(i)
                best = q
        if r < 0:
            return 1, it
        tab[r] = tab[r] / tab[r, j]
        f = tab[:, j].copy()
        f[r] = 0.0
        rows = np.flatnonzero(f != 0.0)
        tab[rows] = tab[rows] - f[rows, None] * tab[r]
        basis[r] = j
        it += 1


def gaussian_mixture(points, centers, weights, inv_two_sigma2):
    out = np.zeros(points.shape[0])
    for j in range(centers.shape[0]):
        dx = points[:, 0] - centers[j, 0]
        dy = points[:, 1] - centers[j, 1]
        dz = points[:, 2] - centers[j, 2]
        d2 = (dx * dx + dy * dy) + dz * dz
        out = out + weights[j] * np.exp(-d2 * inv_two_sigma2)
    return out
