"""Part-labelled triangle meshes: loading, area-weighted sampling, ray casting."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from . import kernels
from .errors import DegenerateMesh, LabelError, ParseError
from .rng import make_rng

T_TOL = 1e-9

# Fixed, non-axis-aligned probe directions for inside/outside parity tests.
_PARITY_DIRS = np.array(
    [
        [0.5773502691896258, 0.5773502691896258, 0.5773502691896258],
        [-0.2672612419124244, 0.5345224838248488, 0.8017837257372732],
        [0.6246950475544243, -0.7808688094430304, 0.0],
        [-0.4082482904638631, -0.4082482904638631, 0.8164965809277261],
        [0.1825741858350554, 0.3651483716701107, -0.9128709291752769],
    ]
)
_PARITY_DIRS = _PARITY_DIRS / np.linalg.norm(_PARITY_DIRS, axis=1, keepdims=True)
# irrational-ish tilt so probe rays never run along grid-aligned edges
_PARITY_TILT = np.array([0.0131, -0.0217, 0.0071])


@dataclass(frozen=True, eq=False)
class PartMesh:
    """Immutable triangle mesh with an integer part label on every face.

    ``transform`` records the 4x4 pose applied at load time (identity: the
    mesh is used at native scale in its canonical frame).
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_part: np.ndarray
    part_names: dict
    name: str = "mesh"
    transform: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        fp = np.array(self.face_part, dtype=np.int64).reshape(-1)
        if len(fp) != len(f):
            raise LabelError(f"{len(f)} faces but {len(fp)} part labels")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ParseError("face references a vertex index out of range")
        names = {int(k): str(n) for k, n in dict(self.part_names).items()}
        missing = sorted(set(np.unique(fp).tolist()) - set(names))
        if missing:
            raise LabelError(f"faces labelled with unknown part ids {missing}")
        for arr in (v, f, fp):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "face_part", fp)
        object.__setattr__(self, "part_names", names)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        return tuple(np.ascontiguousarray(v[self.faces[:, i]]) for i in range(3))

    @cached_property
    def _cross(self) -> np.ndarray:
        a, b, c = self.corners
        return np.cross(b - a, c - a)

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        cr = self._cross
        n = np.linalg.norm(cr, axis=1, keepdims=True)
        return np.divide(cr, n, out=np.zeros_like(cr), where=n > 0)

    @cached_property
    def bounds(self) -> np.ndarray:
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    @property
    def bbox_diagonal(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    @property
    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        lo, hi = self.bounds
        return 0.5 * (lo + hi), 0.5 * self.bbox_diagonal

    @cached_property
    def is_watertight(self) -> bool:
        """Edge-manifold check: every directed edge has exactly one reverse twin."""
        f = self.faces
        if len(f) == 0:
            return False
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        nv = len(self.vertices)
        fwd = e[:, 0] * nv + e[:, 1]
        rev = e[:, 1] * nv + e[:, 0]
        ufwd, counts = np.unique(fwd, return_counts=True)
        if np.any(counts != 1):
            return False
        return bool(np.all(np.isin(rev, ufwd, assume_unique=False)))

    def part_faces(self, part: int) -> np.ndarray:
        return np.flatnonzero(self.face_part == part)

    def submesh(self, part: int) -> "PartMesh":
        idx = self.part_faces(part)
        return PartMesh(self.vertices, self.faces[idx], self.face_part[idx],
                        {part: self.part_names[part]}, name=f"{self.name}:{part}")

    @cached_property
    def exposed(self) -> np.ndarray:
        """Faces whose outer side is not buried inside another part.

        Part-segmented meshes often contain coincident faces where two parts
        touch; those are not graspable surface and are excluded from sampling.
        """
        if len(self.part_names) < 2:
            return np.ones(self.n_faces, dtype=bool)
        a, b, c = self.corners
        centroid = (a + b + c) / 3.0
        delta = 1e-6 * max(self.bbox_diagonal, 1e-12)
        probe = centroid + delta * self.face_normals
        out = np.ones(self.n_faces, dtype=bool)
        for i, p in enumerate(probe):
            out[i] = not is_inside(self, p)
        return out


@dataclass(frozen=True)
class SurfaceSample:
    position: np.ndarray
    normal: np.ndarray
    part: int
    face: int


class SurfaceSamples:
    """Array-backed batch of surface samples; iterating yields ``SurfaceSample``."""

    def __init__(self, positions, normals, parts, faces, bary=None):
        self.positions = np.asarray(positions, dtype=np.float64)
        self.normals = np.asarray(normals, dtype=np.float64)
        self.parts = np.asarray(parts, dtype=np.int64)
        self.faces = np.asarray(faces, dtype=np.int64)
        self.bary = None if bary is None else np.asarray(bary, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i) -> SurfaceSample:
        return SurfaceSample(self.positions[i], self.normals[i], int(self.parts[i]), int(self.faces[i]))

    def __iter__(self) -> Iterator[SurfaceSample]:
        return (self[i] for i in range(len(self)))


class RayHit(NamedTuple):
    t: float
    point: np.ndarray
    face: int
    entering: bool


# --------------------------------------------------------------------------
# loading


def _parse_obj(text: str):
    verts, faces, groups = [], [], []
    group = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif tok[0] == "f":
                idx = []
                for t in tok[1:]:
                    k = int(t.split("/")[0])
                    idx.append(k - 1 if k > 0 else len(verts) + k)
                if len(idx) < 3:
                    raise ValueError("face needs at least 3 vertices")
                for j in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[j], idx[j + 1]])
                    groups.append(group)
            elif tok[0] in ("g", "o"):
                group = " ".join(tok[1:]) or None
        except (ValueError, IndexError) as exc:
            raise ParseError(f"OBJ line {lineno}: {exc}") from exc
    if not verts or not faces:
        raise ParseError("OBJ contains no faces")
    return np.array(verts), np.array(faces, dtype=np.int64), groups


_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _parse_ply(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError("not a PLY file")
    nl = data.find(b"\n", end)
    header = data[:end].decode("ascii", "replace").splitlines()
    body = data[nl + 1:]
    fmt = None
    elements = []  # (name, count, [(prop, type, list_count_type)])
    for line in header:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if tok[1] == "list":
                elements[-1][2].append((tok[4], tok[3], tok[2]))
            else:
                elements[-1][2].append((tok[2], tok[1], None))
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise ParseError(f"unsupported PLY format {fmt!r}")
    verts, faces = None, None
    try:
        if fmt == "ascii":
            toks = body.decode("ascii").split()
            pos = 0
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    row = {}
                    for pname, ptype, ltype in props:
                        if ltype is None:
                            row[pname] = float(toks[pos])
                            pos += 1
                        else:
                            k = int(toks[pos])
                            row[pname] = [int(x) for x in toks[pos + 1:pos + 1 + k]]
                            pos += 1 + k
                    rows.append(row)
                if name == "vertex":
                    verts = np.array([[r["x"], r["y"], r["z"]] for r in rows])
                elif name == "face":
                    key = "vertex_indices" if rows and "vertex_indices" in rows[0] else "vertex_index"
                    faces = [r[key] for r in rows]
        else:
            endian = "<" if fmt == "binary_little_endian" else ">"
            pos = 0
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    row = {}
                    for pname, ptype, ltype in props:
                        if ltype is None:
                            c = _PLY_TYPES[ptype]
                            (row[pname],) = struct.unpack_from(endian + c, body, pos)
                            pos += struct.calcsize(c)
                        else:
                            lc = _PLY_TYPES[ltype]
                            (k,) = struct.unpack_from(endian + lc, body, pos)
                            pos += struct.calcsize(lc)
                            c = _PLY_TYPES[ptype]
                            row[pname] = list(struct.unpack_from(endian + c * k, body, pos))
                            pos += struct.calcsize(c) * k
                    rows.append(row)
                if name == "vertex":
                    verts = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64)
                elif name == "face":
                    key = "vertex_indices" if rows and "vertex_indices" in rows[0] else "vertex_index"
                    faces = [r[key] for r in rows]
    except (IndexError, KeyError, ValueError, struct.error) as exc:
        raise ParseError(f"malformed PLY body: {exc}") from exc
    if verts is None or not faces:
        raise ParseError("PLY has no vertex/face elements")
    tris = []
    for poly in faces:
        for j in range(1, len(poly) - 1):
            tris.append([poly[0], poly[j], poly[j + 1]])
    return verts, np.array(tris, dtype=np.int64), [None] * len(tris)


def _labels_from_annotation(ann: dict, n_faces: int, groups: list):
    parts = ann.get("parts")
    if not isinstance(parts, list) or not parts:
        raise LabelError("annotation needs a non-empty 'parts' list")
    label = np.full(n_faces, -1, dtype=np.int64)
    names = {}
    for p in parts:
        pid = int(p["id"])
        names[pid] = str(p.get("name", f"part{pid}"))
        if "faces" in p:
            start, stop = (int(x) for x in p["faces"])
            if not 0 <= start <= stop <= n_faces:
                raise LabelError(f"part {pid}: face range {start}:{stop} outside 0:{n_faces}")
            label[start:stop] = pid
        for g in p.get("groups", []):
            hit = [i for i, gi in enumerate(groups) if gi == g]
            if not hit:
                raise LabelError(f"part {pid}: OBJ group {g!r} not found")
            label[hit] = pid
    unlabeled = np.flatnonzero(label < 0)
    if unlabeled.size:
        raise LabelError(f"{unlabeled.size} faces without part label (first: {unlabeled[:5].tolist()})")
    return label, names


def load_mesh(path, part_annotation=None) -> PartMesh:
    """Read an OBJ or PLY mesh plus its part annotation.

    The annotation is a JSON sidecar ``{"parts": [{"id", "name", "faces":
    [start, stop]} | {"id", "name", "groups": [...]}]}`` where face ranges
    are half-open.  Without an annotation, OBJ groups become parts (or the
    whole mesh becomes part 0, ``"body"``).
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    suffix = path.suffix.lower()
    if suffix == ".obj":
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"{path} is not UTF-8 text") from exc
        verts, faces, groups = _parse_obj(text)
    elif suffix == ".ply":
        verts, faces, groups = _parse_ply(data)
    else:
        raise ParseError(f"unsupported mesh format {suffix!r}")

    if part_annotation is not None:
        try:
            ann = json.loads(Path(part_annotation).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"bad part annotation {part_annotation}: {exc}") from exc
        labels, names = _labels_from_annotation(ann, len(faces), groups)
    elif any(g is not None for g in groups):
        order = list(dict.fromkeys(g or "default" for g in groups))
        names = dict(enumerate(order))
        lookup = {n: i for i, n in names.items()}
        labels = np.array([lookup[g or "default"] for g in groups], dtype=np.int64)
    else:
        labels, names = np.zeros(len(faces), dtype=np.int64), {0: "body"}
    return PartMesh(verts, faces, labels, names, name=path.stem)


def save_obj(mesh: PartMesh, path, annotation_path=None):
    """Write OBJ with one ``g`` group per contiguous part run, plus optional sidecar."""
    lines = [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices]
    current = None
    for f, p in zip(mesh.faces, mesh.face_part):
        if p != current:
            lines.append(f"g {mesh.part_names[int(p)]}")
            current = p
        lines.append("f " + " ".join(str(int(i) + 1) for i in f))
    Path(path).write_text("\n".join(lines) + "\n")
    if annotation_path is not None:
        parts = []
        for pid, name in sorted(mesh.part_names.items()):
            idx = mesh.part_faces(pid)
            if idx.size and np.all(np.diff(idx) == 1):
                parts.append({"id": pid, "name": name, "faces": [int(idx[0]), int(idx[-1]) + 1]})
            else:
                parts.append({"id": pid, "name": name, "groups": [name]})
        Path(annotation_path).write_text(json.dumps({"parts": parts}, indent=1))


# --------------------------------------------------------------------------
# sampling and rays


def sample_surface(mesh: PartMesh, n: int, seed: int, exposed_only: bool = True) -> SurfaceSamples:
    """Area-weighted uniform surface samples, reproducible for a fixed seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.face_areas.copy()
    if exposed_only:
        areas[~mesh.exposed] = 0.0
    total = areas.sum()
    if not total > 0:
        raise DegenerateMesh("mesh has zero surface area")
    rng = make_rng(seed, "sample_surface")
    cdf = np.cumsum(areas / total)
    cdf[-1] = 1.0
    face = np.searchsorted(cdf, rng.random(n), side="right")
    face = np.minimum(face, mesh.n_faces - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    a, b, c = mesh.corners
    pos = bary[:, :1] * a[face] + bary[:, 1:2] * b[face] + bary[:, 2:] * c[face]
    return SurfaceSamples(pos, mesh.face_normals[face], mesh.face_part[face], face, bary)


def _raw_hits(mesh: PartMesh, origin, direction):
    a, b, c = mesh.corners
    t, face = kernels.ray_triangle_hits(origin, direction, a, b, c, T_TOL)
    order = np.lexsort((face, t))
    return t[order], face[order]


def cast_ray(mesh: PartMesh, origin, direction) -> list[RayHit]:
    """All intersections of a ray with the mesh, ordered by ray parameter.

    Hits at the same parameter (within 1e-9) with the same entering flag are
    reported once, lowest face index first; this removes the duplicate
    produced when a ray crosses an edge shared by two triangles.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(direction))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction must be unit length (got |d|={norm})")
    t, face = _raw_hits(mesh, origin, direction)
    entering = (mesh.face_normals[face] @ direction) < 0.0
    hits: list[RayHit] = []
    for ti, fi, ei in zip(t, face, entering):
        dup = False
        for h in reversed(hits):
            if ti - h.t > T_TOL:
                break
            if h.entering == bool(ei):
                dup = True
                break
        if dup:
            continue
        tt = max(float(ti), 0.0)
        hits.append(RayHit(tt, origin + tt * direction, int(fi), bool(ei)))
    return hits


def is_inside(mesh: PartMesh, point) -> bool:
    """Ray-parity inside test; majority vote over 5 probes for open meshes."""
    point = np.asarray(point, dtype=np.float64)
    dirs = _PARITY_DIRS + _PARITY_TILT
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    n_probe = 1 if mesh.is_watertight else len(dirs)
    votes = sum(len(cast_ray(mesh, point, d)) % 2 for d in dirs[:n_probe])
    return votes * 2 > n_probe
