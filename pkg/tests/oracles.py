"""Independent reference computations used only by the test-suite."""
import math

import numpy as np
from scipy.optimize import nnls


def dense_cone(outward_normal, mu, m=64):
    """Cone edges built from a Householder frame (unrelated to the library's basis)."""
    n = -np.asarray(outward_normal, float)
    n = n / np.linalg.norm(n)
    e = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    v = n - e
    H = np.eye(3) - 2.0 * np.outer(v, v) / np.dot(v, v) if np.linalg.norm(v) > 1e-12 else np.eye(3)
    # H maps e -> n; the other two columns of H span the tangent plane
    cols = [H[:, k] for k in range(3)]
    k_e = int(np.argmax(e))
    t1, t2 = [c for k, c in enumerate(cols) if k != k_e]
    ang = (np.arange(m) + 0.5) * 2 * np.pi / m
    return np.array([n + mu * (np.cos(a) * t1 + np.sin(a) * t2) for a in ang]).T


def wrench_sum(points, forces, com):
    """Net wrench of point forces about com, computed term by term."""
    F = np.zeros(3)
    T = np.zeros(3)
    for p, f in zip(points, forces):
        r = np.asarray(p, float) - np.asarray(com, float)
        F += f
        T += np.array([r[1] * f[2] - r[2] * f[1], r[2] * f[0] - r[0] * f[2], r[0] * f[1] - r[1] * f[0]])
    return np.concatenate([F, T])


def nnls_force_closure(points, normals, mus, caps, com, w_ext, m=64, tol=1e-7):
    """Brute-force feasibility: dense cones, caps via slack columns, NNLS residual."""
    cols, cap_rows = [], []
    n_edge = 2 * m
    M = np.zeros((8, n_edge + 2))
    for i in range(2):
        E = dense_cone(normals[i], mus[i], m)  # edge = n + mu t: normal component 1
        for k in range(m):
            f = E[:, k]
            forces = [f, np.zeros(3)] if i == 0 else [np.zeros(3), f]
            M[:6, i * m + k] = wrench_sum(points, forces, com)
            M[6 + i, i * m + k] = 1.0
        M[6 + i, n_edge + i] = 1.0
    rhs = np.concatenate([-np.asarray(w_ext, float), caps])
    scale = np.maximum(np.abs(M).max(axis=1), np.abs(rhs))
    scale[scale == 0] = 1
    x, res = nnls(M / scale[:, None], rhs / scale, maxiter=5000)
    return res <= tol


def voxel_volume(mesh, res=60):
    """Volume of a convex closed mesh by counting voxel centres inside every face plane."""
    lo, hi = mesh.bounds
    h = (hi - lo) / res
    axes = [lo[k] + (np.arange(res) + 0.5) * h[k] for k in range(3)]
    a, b, c = (mesh.vertices[mesh.faces[:, k]] for k in range(3))
    n = np.cross(b - a, c - a)
    off = np.einsum("ij,ij->i", n, a)
    X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
    inside = 0
    for z in axes[2]:
        P = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=1)
        inside += int(np.all(P @ n.T <= off + 1e-15, axis=1).sum())
    return inside * float(np.prod(h))


def two_body_centroid(masses, centroids):
    m = np.asarray(masses, float)
    c = np.asarray(centroids, float)
    return (m[:, None] * c).sum(axis=0) / m.sum()


def mixture_double_loop(points, contacts, weights, sigma):
    """Normalized Gaussian mixture by explicit per-point, per-contact loops."""
    out = []
    for p in np.asarray(points, float):
        acc = 0.0
        for c, w in zip(np.asarray(contacts, float), weights):
            d2 = sum((float(p[k]) - float(c[k])) ** 2 for k in range(3))
            acc += float(w) * math.exp(-d2 / (2.0 * sigma * sigma))
        out.append(acc)
    out = np.array(out)
    return out / out.sum()
