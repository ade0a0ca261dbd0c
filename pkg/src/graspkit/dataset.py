"""Per-instance record generation, dataset splits and on-disk persistence.

On-disk layout::

    <root>/index.jsonl          one JSON object per record, sorted keys
    <root>/blobs/<id>.bin       binary arrays of that record

Blob layout (all little-endian)::

    offset  size  content
    0       8     magic b"GKBLOB\\x00\\x01"
    8       4     uint32 schema version
    12      4     uint32 n_points
    16      4     uint32 n_positive_pairs
    20      4     uint32 n_negative_pairs
    24      4     uint32 n_grasps
    28      ...   float32 points   (n_points, 3)
                  float32 normals  (n_points, 3)
                  int32   part ids (n_points,)
                  float64 prob     (n_points,)
                  int32   positive pairs (n_positive_pairs, 2)
                  int32   negative pairs (n_negative_pairs, 2)
                  float64 grasp table    (n_grasps, 18)
                  float64 contact weights (2 * n_grasps,)
    end-4   4     uint32 CRC-32 of every preceding byte

Grasp table columns: ``p1 (3), n1 (3), p2 (3), n2 (3), mu1, mu2, cap1, cap2,
part1, part2``.
Affordance contacts are the rows' ``p1`` and ``p2`` interleaved, so the map
can be recomputed from the blob alone.
"""
from __future__ import annotations

import copy
import hashlib
import json
import multiprocessing as mp
import struct
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .affordance import AffordanceMap, PairLabelSet, build_affordance, snap_pairs
from .config import DEFAULT_CONFIG, config_hash
from .errors import NoPositiveGrasps, RecordIOError, SchemaVersionMismatch
from .fixtures import FIXTURES, get_fixture
from .grasp import (
    GraspCandidate, check_force_closure, contact_models, generate_candidates,
    grasp_matrix, label_candidates, task_wrenches, WrenchTask,
)
from .instance import InstanceSpec
from .language import classify_hard, summarize_instance
from .materials import (
    ContactModel, MassProperties, PartAssignment, assign_materials, builtin_materials,
    load_material_table, mass_properties, material_lookup,
)
from .mesh import PartMesh, SurfaceSample, load_mesh, sample_surface
from .rng import derive_seed, make_rng

SCHEMA_VERSION = 1
BLOB_MAGIC = b"GKBLOB\x00\x01"
_HEADER = struct.Struct("<8sIIIII")
GRASP_COLUMNS = 18

INDEX_KEYS = (
    "blob", "blob_crc32", "com", "cone_edges", "config_hash", "disturbances", "dropped_pairs",
    "grasp_priors", "gravity", "hard", "hard_criteria", "hard_score", "hull_parts", "instance_id",
    "mass", "material_table_hash", "materials", "n_grasps", "n_negative_pairs", "n_points",
    "n_positive_pairs", "n_same_surface_negatives", "object_id", "part_names", "schema_version",
    "seed", "sigma", "summary", "transform",
)


@dataclass(eq=False)
class DatasetRecord:
    instance_id: str
    object_id: str
    seed: int
    points: np.ndarray  # float32 (n, 3); the float64 cast is what the map was built on
    normals: np.ndarray  # float32 (n, 3)
    part_ids: np.ndarray  # int32 (n,)
    prob: np.ndarray  # float64 (n,)
    positive_pairs: np.ndarray  # int32 (kp, 2)
    negative_pairs: np.ndarray  # int32 (kn, 2)
    grasps: np.ndarray  # float64 (g, 18), see module docstring
    contact_weights: np.ndarray  # float64 (2g,)
    sigma: float
    summary: str
    hard: bool
    meta: dict = field(default_factory=dict)

    _ARRAYS = ("points", "normals", "part_ids", "prob", "positive_pairs", "negative_pairs",
               "grasps", "contact_weights")

    def __eq__(self, other):
        if not isinstance(other, DatasetRecord):
            return NotImplemented
        for name in self._ARRAYS:
            a, b = getattr(self, name), getattr(other, name)
            if a.dtype != b.dtype or a.shape != b.shape or not np.array_equal(a, b):
                return False
        return (self.instance_id, self.object_id, self.seed, self.sigma, self.summary, self.hard,
                self.meta) == (other.instance_id, other.object_id, other.seed, other.sigma,
                               other.summary, other.hard, other.meta)

    @property
    def contacts(self) -> np.ndarray:
        g = self.grasps
        return np.stack([g[:, 0:3], g[:, 6:9]], axis=1).reshape(-1, 3)

    @property
    def affordance(self) -> AffordanceMap:
        return AffordanceMap(self.points.astype(np.float64), self.prob, self.sigma)

    @property
    def pair_labels(self) -> PairLabelSet:
        return PairLabelSet(self.positive_pairs.astype(np.int64), self.negative_pairs.astype(np.int64))


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    val: tuple
    test: tuple
    hard: tuple  # subset of test


# ---------------------------------------------------------------------------
# generation


def material_table(cfg: dict):
    path = cfg["dataset"].get("material_table")
    return load_material_table(path) if path else builtin_materials()


def material_table_hash(table) -> str:
    rows = [asdict(m) for m in table]
    return hashlib.sha256(json.dumps(rows, sort_keys=True).encode()).hexdigest()


def _full_config(config) -> dict:
    if config is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    return config


def _quality_weights(positives):
    """Per-grasp quality in (0, 1]: the least-force grasp gets weight 1."""
    forces = np.array([max(lab.min_force, 1e-12) for _, lab in positives])
    return forces.min() / forces


def generate_instance(mesh: PartMesh, object_id: str, seed: int, config: dict | None = None,
                      assignments=None, instance_id: str | None = None):
    """Run the full labelling pipeline for one instance.

    Returns ``(InstanceSpec, DatasetRecord)``.  When no force-closure positive
    survives (or every positive pair collapses onto one sampled point), the
    materials and rays are redrawn with a new attempt seed, up to
    ``dataset.max_retries`` times; then ``NoPositiveGrasps`` is raised.
    """
    cfg = _full_config(config)
    dcfg, gcfg = cfg["dataset"], cfg["grasp"]
    table = material_table(cfg)
    instance_id = instance_id or f"{object_id}-{seed}"
    samples = sample_surface(mesh, int(dcfg["n_points"]), derive_seed(seed, "points"))
    points32 = samples.positions.astype(np.float32)
    pts = points32.astype(np.float64)

    for attempt in range(int(dcfg["max_retries"]) + 1):
        attempt_seed = derive_seed(seed, "attempt", attempt)
        assign = list(assignments) if assignments is not None else assign_materials(
            mesh, attempt_seed, table, cfg["priors"])
        mass = mass_properties(mesh, assign, hull_fallback=bool(dcfg["hull_fallback"]))
        cands = generate_candidates(mesh, assign, gcfg, attempt_seed, mass_props=mass)
        labeled = label_candidates(cands, mass, assign, gcfg, samples=samples, seed=attempt_seed)
        if not labeled.positives:
            continue
        pos_pairs = [(c.contact1.position, c.contact2.position) for c, _ in labeled.positives]
        neg_pairs = [(c.contact1.position, c.contact2.position) for c in labeled.negatives]
        pairs = snap_pairs(pts, pos_pairs, neg_pairs)
        if len(pairs.positive_pairs):
            break
    else:
        raise NoPositiveGrasps(f"{instance_id}: no force-closure positives after "
                               f"{int(dcfg['max_retries']) + 1} attempts")

    amap = {a.part: a for a in assign}
    rows, weights = [], []
    for cand, _ in labeled.positives:
        m1, m2 = contact_models(cand, amap, gcfg)
        c1, c2 = cand.contact1, cand.contact2
        rows.append(np.concatenate([c1.position, c1.normal, c2.position, c2.normal,
                                    [m1.mu, m2.mu, m1.force_cap, m2.force_cap, c1.part, c2.part]]))
        weights += [amap[c1.part].grasp_prior, amap[c2.part].grasp_prior]
    grasps = np.array(rows, dtype=np.float64).reshape(-1, GRASP_COLUMNS)
    weights = np.array(weights, dtype=np.float64)
    if cfg["affordance"]["quality_weighting"]:
        weights = weights * np.repeat(_quality_weights(labeled.positives), 2)
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    sigma = float(cfg["affordance"]["sigma_fraction"]) * diag
    contacts = np.stack([grasps[:, 0:3], grasps[:, 6:9]], axis=1).reshape(-1, 3)
    aff = build_affordance(pts, contacts, weights, sigma)
    pairs.validate(len(pts))

    instance = InstanceSpec(instance_id, object_id, mesh, tuple(assign), mass, seed, mass.hull_parts)
    summary = summarize_instance(instance)
    verdict = classify_hard(summary, instance, int(cfg["language"]["hard_threshold"]), table)

    meta = {
        "schema_version": SCHEMA_VERSION,
        "materials": {mesh.part_names[a.part]: a.material.name for a in assign},
        "part_names": {str(k): v for k, v in sorted(mesh.part_names.items())},
        "grasp_priors": {str(a.part): a.grasp_prior for a in assign},
        "mass": float(mass.mass),
        "com": [float(x) for x in mass.com],
        "gravity": float(gcfg["gravity"]),
        "cone_edges": int(gcfg["cone_edges"]),
        "disturbances": [[float(v) for v in d] for d in gcfg.get("disturbances") or []],
        "hull_parts": [int(p) for p in mass.hull_parts],
        "transform": [[float(v) for v in row] for row in mesh.transform],
        "hard_score": int(verdict.score),
        "hard_criteria": {k: bool(v) for k, v in verdict.criteria_hit.items()},
        "dropped_pairs": int(pairs.dropped),
        "n_same_surface_negatives": int(labeled.n_same_surface),
        "material_table_hash": material_table_hash(table),
        "config_hash": config_hash(cfg),
    }
    record = DatasetRecord(
        instance_id=instance_id, object_id=object_id, seed=int(seed),
        points=points32, normals=samples.normals.astype(np.float32),
        part_ids=samples.parts.astype(np.int32), prob=aff.prob,
        positive_pairs=pairs.positive_pairs.astype(np.int32),
        negative_pairs=pairs.negative_pairs.astype(np.int32),
        grasps=grasps, contact_weights=weights, sigma=sigma,
        summary=summary.text, hard=bool(verdict.is_hard), meta=meta,
    )
    return instance, record


def resolve_mesh(name: str) -> tuple[str, PartMesh]:
    """``(object_id, mesh)`` for a fixture name or a mesh file path.

    A file ``foo.obj`` picks up ``foo.json`` as its part annotation when present.
    """
    if name in FIXTURES:
        return name, get_fixture(name)
    p = Path(name)
    ann = p.with_suffix(".json")
    return p.stem, load_mesh(p, ann if ann.exists() else None)


def instance_seed(global_seed: int, instance_id: str) -> int:
    return derive_seed(int(global_seed), instance_id)


def dataset_tasks(cfg: dict) -> list[tuple[str, str, int]]:
    """``(object name, instance_id, seed)`` for every instance the config asks for."""
    out = []
    for name in cfg["dataset"]["objects"]:
        obj = name if name in FIXTURES else Path(name).stem
        for k in range(int(cfg["dataset"]["instances_per_object"])):
            iid = f"{obj}-{k:04d}"
            out.append((name, iid, instance_seed(cfg["seed"], iid)))
    return out


def _run_task(args):
    name, iid, seed, cfg = args
    obj, mesh = resolve_mesh(name)
    return generate_instance(mesh, obj, seed, cfg, instance_id=iid)[1]


def generate_dataset(cfg: dict | None = None, workers: int | None = None) -> list[DatasetRecord]:
    """All records for ``cfg``, sorted by instance_id; identical for any worker count."""
    cfg = _full_config(cfg)
    workers = int(workers or cfg["dataset"]["workers"] or 1)
    tasks = [(n, i, s, cfg) for n, i, s in dataset_tasks(cfg)]
    if workers <= 1 or len(tasks) <= 1:
        records = [_run_task(t) for t in tasks]
    else:
        with mp.get_context("spawn").Pool(workers) as pool:
            records = pool.map(_run_task, tasks, chunksize=1)
    return sorted(records, key=lambda r: r.instance_id)


def instance_from_record(rec: DatasetRecord, table=None) -> InstanceSpec:
    """Rebuild the physical side of an instance (materials, mass, CoM) from a record."""
    lookup = material_lookup(table)
    names = {int(k): v for k, v in rec.meta["part_names"].items()}
    priors = {int(k): float(v) for k, v in rec.meta["grasp_priors"].items()}
    assign = tuple(PartAssignment(pid, lookup[rec.meta["materials"][names[pid]]], priors[pid])
                   for pid in sorted(names))
    mass = MassProperties(float(rec.meta["mass"]), np.asarray(rec.meta["com"], dtype=np.float64),
                          {}, {}, tuple(rec.meta["hull_parts"]))
    return InstanceSpec(rec.instance_id, rec.object_id, None, assign, mass, rec.seed,
                        mass.hull_parts, names)


def grasp_candidates_from_record(rec: DatasetRecord) -> list[GraspCandidate]:
    """The stored positive grasps as candidates with their exact contacts."""
    out = []
    for row in rec.grasps:
        out.append(GraspCandidate(SurfaceSample(row[0:3], row[3:6], int(row[16]), -1),
                                  SurfaceSample(row[6:9], row[9:12], int(row[17]), -1)))
    return out


def pair_candidates(rec: DatasetRecord, pairs) -> list[GraspCandidate]:
    """Candidates from point-index pairs, using the sampled points and normals."""
    pts = rec.points.astype(np.float64)
    nrm = rec.normals.astype(np.float64)
    return [GraspCandidate(SurfaceSample(pts[i], nrm[i], int(rec.part_ids[i]), -1),
                           SurfaceSample(pts[j], nrm[j], int(rec.part_ids[j]), -1))
            for i, j in np.asarray(pairs, dtype=np.int64).reshape(-1, 2)]


# ---------------------------------------------------------------------------
# splits


def split_dataset(records, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    """Seeded shuffle, then partition by largest-remainder rounding of ``fractions``."""
    f = np.asarray(fractions, dtype=np.float64)
    if f.shape != (3,) or np.any(f < 0) or abs(f.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must be three nonnegative numbers summing to 1")
    ids = sorted(r.instance_id if isinstance(r, DatasetRecord) else r for r in records)
    hard_ids = {r.instance_id for r in records if isinstance(r, DatasetRecord) and r.hard}
    n = len(ids)
    raw = f * n
    sizes = np.floor(raw).astype(int)
    for k in np.argsort(-(raw - sizes), kind="stable")[: n - sizes.sum()]:
        sizes[k] += 1
    order = make_rng(seed, "split").permutation(n)
    shuffled = [ids[i] for i in order]
    a, b = sizes[0], sizes[0] + sizes[1]
    train, val, test = tuple(shuffled[:a]), tuple(shuffled[a:b]), tuple(shuffled[b:])
    return DatasetSplit(train, val, test, tuple(i for i in test if i in hard_ids))


# ---------------------------------------------------------------------------
# persistence


def encode_blob(rec: DatasetRecord) -> bytes:
    n = len(rec.points)
    parts = [
        _HEADER.pack(BLOB_MAGIC, SCHEMA_VERSION, n, len(rec.positive_pairs),
                     len(rec.negative_pairs), len(rec.grasps)),
        np.ascontiguousarray(rec.points, dtype="<f4").tobytes(),
        np.ascontiguousarray(rec.normals, dtype="<f4").tobytes(),
        np.ascontiguousarray(rec.part_ids, dtype="<i4").tobytes(),
        np.ascontiguousarray(rec.prob, dtype="<f8").tobytes(),
        np.ascontiguousarray(rec.positive_pairs, dtype="<i4").tobytes(),
        np.ascontiguousarray(rec.negative_pairs, dtype="<i4").tobytes(),
        np.ascontiguousarray(rec.grasps, dtype="<f8").tobytes(),
        np.ascontiguousarray(rec.contact_weights, dtype="<f8").tobytes(),
    ]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_blob(data: bytes, where: str = "blob") -> dict:
    if len(data) < _HEADER.size + 4:
        raise RecordIOError(f"{where}: truncated ({len(data)} bytes)")
    magic, version, n, kp, kn, g = _HEADER.unpack_from(data)
    if magic != BLOB_MAGIC:
        raise RecordIOError(f"{where}: bad magic {magic!r}")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{where}: schema {version}, expected {SCHEMA_VERSION}")
    layout = [("points", "<f4", (n, 3)), ("normals", "<f4", (n, 3)), ("part_ids", "<i4", (n,)),
              ("prob", "<f8", (n,)), ("positive_pairs", "<i4", (kp, 2)),
              ("negative_pairs", "<i4", (kn, 2)), ("grasps", "<f8", (g, GRASP_COLUMNS)),
              ("contact_weights", "<f8", (2 * g,))]
    size = _HEADER.size + sum(np.dtype(dt).itemsize * int(np.prod(sh)) for _, dt, sh in layout)
    if len(data) != size + 4:
        raise RecordIOError(f"{where}: expected {size + 4} bytes, found {len(data)}")
    (crc,) = struct.unpack_from("<I", data, size)
    if zlib.crc32(data[:size]) != crc:
        raise RecordIOError(f"{where}: checksum mismatch")
    out, off = {}, _HEADER.size
    for name, dt, shape in layout:
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype=dt, count=count, offset=off).reshape(shape)
        out[name] = arr.astype(np.dtype(dt).newbyteorder("="))
        off += arr.nbytes
    return out


def index_entry(rec: DatasetRecord, blob: bytes) -> dict:
    entry = {
        **rec.meta,
        "instance_id": rec.instance_id, "object_id": rec.object_id, "seed": rec.seed,
        "sigma": rec.sigma, "summary": rec.summary, "hard": rec.hard,
        "n_points": len(rec.points), "n_positive_pairs": len(rec.positive_pairs),
        "n_negative_pairs": len(rec.negative_pairs), "n_grasps": len(rec.grasps),
        "blob": f"blobs/{rec.instance_id}.bin", "blob_crc32": struct.unpack("<I", blob[-4:])[0],
    }
    return entry


def write_records(path, records) -> Path:
    """Write ``index.jsonl`` and one blob per record under ``path``."""
    root = Path(path)
    try:
        (root / "blobs").mkdir(parents=True, exist_ok=True)
        lines = []
        for rec in sorted(records, key=lambda r: r.instance_id):
            blob = encode_blob(rec)
            (root / "blobs" / f"{rec.instance_id}.bin").write_bytes(blob)
            lines.append(json.dumps(index_entry(rec, blob), sort_keys=True))
        (root / "index.jsonl").write_text("".join(line + "\n" for line in lines))
    except OSError as e:
        raise RecordIOError(f"cannot write dataset to {root}: {e}") from e
    return root


_META_SKIP = {"instance_id", "object_id", "seed", "sigma", "summary", "hard", "n_points",
              "n_positive_pairs", "n_negative_pairs", "n_grasps", "blob", "blob_crc32"}


def read_index(path) -> list[dict]:
    root = Path(path)
    try:
        text = (root / "index.jsonl").read_text()
    except OSError as e:
        raise RecordIOError(f"cannot read index in {root}: {e}") from e
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as e:
            raise RecordIOError(f"index line {lineno}: {e}") from e
        if entry.get("schema_version") != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"index line {lineno}: schema {entry.get('schema_version')}, expected {SCHEMA_VERSION}")
        entries.append(entry)
    return entries


def load_record(root, entry: dict) -> DatasetRecord:
    iid = entry.get("instance_id", "?")
    try:
        data = (Path(root) / entry["blob"]).read_bytes()
    except (OSError, KeyError) as e:
        raise RecordIOError(f"{iid}: cannot read blob: {e}") from e
    arrays = decode_blob(data, iid)
    for key, arr in (("n_points", "points"), ("n_positive_pairs", "positive_pairs"),
                     ("n_negative_pairs", "negative_pairs"), ("n_grasps", "grasps")):
        if entry[key] != len(arrays[arr]):
            raise RecordIOError(f"{iid}: index says {key}={entry[key]}, blob has {len(arrays[arr])}")
    meta = {k: v for k, v in entry.items() if k not in _META_SKIP}
    return DatasetRecord(instance_id=iid, object_id=entry["object_id"], seed=entry["seed"],
                         sigma=entry["sigma"], summary=entry["summary"], hard=entry["hard"],
                         meta=meta, **arrays)


def read_records(path) -> list[DatasetRecord]:
    root = Path(path)
    return [load_record(root, e) for e in read_index(root)]


# ---------------------------------------------------------------------------
# verification


def brute_force_prob(points, contacts, weights, sigma) -> np.ndarray:
    """Direct per-point evaluation of the mixture (independent of the kernels)."""
    pts = np.asarray(points, dtype=np.float64)
    c = np.asarray(contacts, dtype=np.float64).reshape(-1, 3)
    w = np.asarray(weights, dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    dens = np.empty(len(pts))
    for i, p in enumerate(pts):
        d2 = ((p - c) ** 2).sum(axis=1)
        dens[i] = np.dot(w, np.exp(-d2 * inv))
    return dens / dens.sum()


def recheck_grasps(rec: DatasetRecord) -> np.ndarray:
    """Force-closure verdict for every stored positive grasp, from the record alone."""
    m = rec.meta
    com = np.asarray(m["com"], dtype=np.float64)
    cfg = {"gravity": m["gravity"], "disturbances": m["disturbances"]}
    ok = np.zeros(len(rec.grasps), dtype=bool)
    for k, row in enumerate(rec.grasps):
        c1 = SurfaceSample(row[0:3], row[3:6], -1, -1)
        c2 = SurfaceSample(row[6:9], row[9:12], -1, -1)
        G = grasp_matrix(GraspCandidate(c1, c2), com)
        models = (ContactModel(row[12], row[14], m["cone_edges"]),
                  ContactModel(row[13], row[15], m["cone_edges"]))
        ok[k] = all(check_force_closure(G, WrenchTask(w), models, (row[3:6], row[9:12])).feasible
                    for w in task_wrenches(m["mass"], cfg))
    return ok


def verify_record(rec: DatasetRecord, brute_force: bool = False) -> list[str]:
    """Invariant problems of one record (empty when it is sound)."""
    problems = []
    n = len(rec.points)
    if not (len(rec.prob) == len(rec.normals) == len(rec.part_ids) == n):
        problems.append("per-point arrays differ in length")
        return problems
    if np.any(rec.prob < 0):
        problems.append("negative affordance probability")
    if abs(rec.prob.sum() - 1.0) > 1e-9:
        problems.append(f"affordance sums to {rec.prob.sum()!r}")
    try:
        rec.pair_labels.validate(n)
    except ValueError as e:
        problems.append(str(e))
    if len(rec.contact_weights) != 2 * len(rec.grasps):
        problems.append("contact weight count does not match grasp table")
        return problems
    if len(rec.grasps) == 0 or len(rec.positive_pairs) == 0:
        problems.append("record has no positive grasps")
        return problems
    if brute_force:
        ref = brute_force_prob(rec.points, rec.contacts, rec.contact_weights, rec.sigma)
    else:
        ref = build_affordance(rec.points.astype(np.float64), rec.contacts, rec.contact_weights,
                               rec.sigma).prob
    diff = float(np.max(np.abs(ref - rec.prob)))
    if diff > 1e-12:
        problems.append(f"affordance differs from recomputation by {diff:.3e}")
    bad = np.flatnonzero(~recheck_grasps(rec))
    if bad.size:
        problems.append(f"{bad.size} stored positive grasps fail force closure (first: {bad[0]})")
    return problems
