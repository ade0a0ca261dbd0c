"""Procedural part-segmented test objects.

Multi-box objects are built from closed boxes whose faces are subdivided on
the common grid of all box coordinates, so coincident faces between touching
parts match triangle for triangle (and are detected as non-exposed).
"""
from __future__ import annotations

import numpy as np

from .mesh import PartMesh


def _box_faces(lo, hi, grid):
    """Closed, outward-oriented triangulated box subdivided on ``grid``."""
    verts, faces = [], []
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    ticks = []
    for ax in range(3):
        g = np.asarray(grid[ax]) if grid is not None else np.array([])
        inner = g[(g > lo[ax]) & (g < hi[ax])]
        ticks.append(np.unique(np.concatenate([[lo[ax], hi[ax]], inner])))
    vid = {}

    def vertex(p):
        key = tuple(p)
        if key not in vid:
            vid[key] = len(verts)
            verts.append(p)
        return vid[key]

    for ax in range(3):
        u, v = (ax + 1) % 3, (ax + 2) % 3
        for side, val in ((-1, lo[ax]), (1, hi[ax])):
            for i in range(len(ticks[u]) - 1):
                for j in range(len(ticks[v]) - 1):
                    quad = []
                    for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = [0.0, 0.0, 0.0]
                        p[ax] = val
                        p[u] = ticks[u][i + du]
                        p[v] = ticks[v][j + dv]
                        quad.append(vertex(tuple(p)))
                    a, b, c, d = quad
                    # (u, v, ax) is right-handed, so this winding faces +ax
                    if side > 0:
                        faces += [[a, b, c], [a, c, d]]
                    else:
                        faces += [[a, c, b], [a, d, c]]
    return np.array(verts, float), np.array(faces, np.int64)


def multibox(name, boxes):
    """Mesh from ``[(part_name, lo, hi), ...]``; each box becomes one part."""
    grid = [sorted({float(b[k][ax]) for b in boxes for k in (1, 2)}) for ax in range(3)]
    verts, faces, labels, names = [], [], [], {}
    offset = 0
    for pid, (pname, lo, hi) in enumerate(boxes):
        v, f = _box_faces(lo, hi, grid if len(boxes) > 1 else None)
        verts.append(v)
        faces.append(f + offset)
        labels.append(np.full(len(f), pid))
        names[pid] = pname
        offset += len(v)
    return PartMesh(np.concatenate(verts), np.concatenate(faces), np.concatenate(labels), names, name=name)


def unit_cube(part="body", size=1.0):
    """Origin-centred cube: 8 vertices, 12 faces, one part."""
    h = 0.5 * size
    return multibox("cube", [(part, (-h, -h, -h), (h, h, h))])


def icosphere(radius=0.1, subdivisions=2, part="body"):
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = list(f)
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return PartMesh(np.array(verts) * radius, np.array(faces), np.zeros(len(faces), int),
                    {0: part}, name="sphere")


def hammer():
    return multibox("hammer", [
        ("handle", (-0.15, -0.0125, -0.0125), (0.10, 0.0125, 0.0125)),
        ("head", (0.10, -0.05, -0.0125), (0.14, 0.05, 0.0125)),
    ])


def lamp():
    return multibox("lamp", [
        ("base", (-0.06, -0.06, 0.0), (0.06, 0.06, 0.02)),
        ("pole", (-0.01, -0.01, 0.02), (0.01, 0.01, 0.22)),
    ])


def faucet():
    # part order follows the switch / frame / spout example description
    return multibox("faucet", [
        ("switch", (-0.01, -0.01, 0.15), (0.01, 0.01, 0.18)),
        ("frame", (-0.02, -0.02, 0.0), (0.02, 0.02, 0.15)),
        ("spout", (0.02, -0.01, 0.12), (0.12, 0.01, 0.14)),
    ])


def clock():
    return multibox("clock", [
        ("base", (-0.05, -0.03, 0.0), (0.05, 0.03, 0.03)),
        ("body", (-0.10, -0.02, 0.03), (0.10, 0.02, 0.23)),
    ])


def knife():
    return multibox("knife", [
        ("handle", (-0.10, -0.01, -0.0125), (0.0, 0.01, 0.0125)),
        ("blade", (0.0, -0.002, -0.015), (0.15, 0.002, 0.015)),
    ])


def mug():
    return multibox("mug", [
        ("body", (-0.035, -0.035, 0.0), (0.035, 0.035, 0.10)),
        ("handle", (0.035, -0.01, 0.03), (0.065, 0.01, 0.07)),
    ])


FIXTURES = {
    "cube": lambda: unit_cube(size=0.06),
    "unit_cube": unit_cube,
    "sphere": icosphere,
    "hammer": hammer,
    "lamp": lamp,
    "faucet": faucet,
    "clock": clock,
    "knife": knife,
    "mug": mug,
}

DESK_CORPUS = ("hammer", "lamp", "faucet", "mug", "knife")


def get_fixture(name: str) -> PartMesh:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None
