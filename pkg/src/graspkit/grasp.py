"""Two-finger grasp candidates and force-closure labelling.

Contacts are hard-finger point contacts.  Each friction cone is replaced by
``m`` unit edge vectors at half-angle ``atan(mu)`` around the inward normal;
the contact forces are nonnegative combinations of those edges, and a grasp
is labelled by solving

    min  sum(alpha)
    s.t. G f_c + w_ext = 0,   inward-normal component of f_ci <= eps_i,
         alpha >= 0

where ``w_ext`` is the external wrench applied to the object at its centre
of mass (gravity: force ``(0, 0, -m g)``, zero torque).  The grasp is
feasible iff that program has a solution.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .lp import solve_lp
from .materials import ContactModel, MassProperties, assignment_map, contact_model_at
from .mesh import PartMesh, SurfaceSample, SurfaceSamples, _raw_hits, T_TOL
from .rng import make_rng

GRAVITY = 9.81
_GRAVITY_DIR = np.array([0.0, 0.0, -1.0])

DEFAULT_GRASP_CONFIG = {
    "n_rays": 400,
    "max_width": 0.08,
    "antipodal_margin": 0.0,
    "com_line_fraction": 0.5,
    "cone_edges": 16,
    "force_cap_scale": 1.0,
    "gravity": GRAVITY,
    "prior_threshold": 0.5,
    "negative_ratio": 1.0,
    "same_surface_angle_deg": 30.0,
    "disturbances": [],
}


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    contact1: SurfaceSample
    contact2: SurfaceSample

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.contact2.position - self.contact1.position))

    @property
    def axis(self) -> np.ndarray:
        d = self.contact2.position - self.contact1.position
        return d / np.linalg.norm(d)


@dataclass(frozen=True)
class GraspMatrix:
    matrix: np.ndarray  # 6x6, columns [f1 (3), f2 (3)]
    com_used: np.ndarray


@dataclass(frozen=True)
class WrenchTask:
    f_ext: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.f_ext, dtype=np.float64).reshape(6)
        if not np.all(np.isfinite(w)):
            raise ValueError("external wrench must be finite")
        object.__setattr__(self, "f_ext", w)


@dataclass(frozen=True)
class GraspLabel:
    feasible: bool
    min_force: float
    slack: float
    forces: np.ndarray | None = field(default=None, repr=False)


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def grasp_matrix(candidate: GraspCandidate, mass_props: MassProperties | np.ndarray) -> GraspMatrix:
    com = np.asarray(getattr(mass_props, "com", mass_props), dtype=np.float64)
    G = np.zeros((6, 6))
    for i, c in enumerate((candidate.contact1, candidate.contact2)):
        G[:3, 3 * i:3 * i + 3] = np.eye(3)
        G[3:, 3 * i:3 * i + 3] = skew(np.asarray(c.position) - com)
    return GraspMatrix(G, com)


def gravity_task(mass: float, gravity: float = GRAVITY) -> WrenchTask:
    return WrenchTask(np.array([0.0, 0.0, -mass * gravity, 0.0, 0.0, 0.0]))


def _tangent_basis(inward: np.ndarray, load=None) -> tuple[np.ndarray, np.ndarray]:
    """Tangent frame whose first axis is the load direction projected onto the contact plane.

    Aligning one cone edge with the dominant tangential demand makes the
    polyhedral cone exact in that direction, and because the frame follows
    the load rather than a world axis, rotating the whole problem rotates the
    cones with it.  ``load`` defaults to gravity.
    """
    if load is None:
        d = _GRAVITY_DIR
    else:
        d = np.asarray(load, dtype=np.float64)
        d = d / np.linalg.norm(d)
    t1 = d - np.dot(d, inward) * inward
    if np.linalg.norm(t1) < 1e-6:
        ref = np.array([1.0, 0.0, 0.0]) if abs(inward[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        t1 = ref - np.dot(ref, inward) * inward
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(inward, t1)
    return t1, t2


def friction_cone_edges(outward_normal, mu: float, m: int, load=None) -> np.ndarray:
    """``3 x m`` unit edge vectors of the linearized cone about the inward normal."""
    n = -np.asarray(outward_normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    t1, t2 = _tangent_basis(n, load)
    ang = 2.0 * np.pi * np.arange(m) / m
    c = 1.0 / np.sqrt(1.0 + mu * mu)
    s = mu * c
    return (c * n[:, None] + s * (np.outer(t1, np.cos(ang)) + np.outer(t2, np.sin(ang))))


def check_force_closure(G: GraspMatrix | np.ndarray, task: WrenchTask | np.ndarray,
                        models: Sequence[ContactModel], normals: Sequence,
                        cone_edges: int | None = None, impl=None) -> GraspLabel:
    """Decide whether friction-limited contact forces can balance ``task``."""
    Gm = np.asarray(getattr(G, "matrix", G), dtype=np.float64)
    w = np.asarray(getattr(task, "f_ext", task), dtype=np.float64).reshape(6)
    # contacts must supply -force(w); orient the cone polygons along that demand
    load = w[:3] if np.linalg.norm(w[:3]) > 0 else None
    blocks, caps_rows, caps = [], [], []
    n_var = 0
    for i, (model, normal) in enumerate(zip(models, normals)):
        m = int(cone_edges or model.cone_edges)
        E = friction_cone_edges(normal, model.mu, m, load)
        blocks.append(E)
        n_var += m
    E_all = np.zeros((6, n_var))
    off = 0
    for i, E in enumerate(blocks):
        m = E.shape[1]
        E_all[3 * i:3 * i + 3, off:off + m] = E
        row = np.zeros(n_var)
        # every edge has the same inward-normal component cos(atan(mu))
        row[off:off + m] = 1.0 / np.sqrt(1.0 + models[i].mu ** 2)
        caps_rows.append(row)
        caps.append(models[i].force_cap)
        off += m
    A_eq = Gm @ E_all
    res = solve_lp(np.ones(n_var), A_eq, -w, np.array(caps_rows), np.array(caps), impl=impl)
    if not res.feasible or res.x is None:
        return GraspLabel(False, float("nan"), res.infeasibility)
    f = (E_all @ res.x).reshape(2, 3)
    min_force = float(sum(np.dot(f[i], -np.asarray(normals[i])) for i in range(2)))
    residual = float(np.linalg.norm(Gm @ f.reshape(6) + w))
    return GraspLabel(True, min_force, residual, f)


# ---------------------------------------------------------------------------
# candidates


def _random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _segments(mesh: PartMesh, origin, direction):
    """(entering, exiting) hit pairs along a ray, internal part interfaces removed."""
    t, face = _raw_hits(mesh, origin, direction)
    entering = (mesh.face_normals[face] @ direction) < 0.0
    hits = []
    for ti, fi, ei in zip(t, face, entering):
        if hits and ti - hits[-1][0] <= T_TOL and hits[-1][2] == bool(ei):
            continue  # shared-edge duplicate
        hits.append((float(ti), int(fi), bool(ei)))
    cleaned = []
    for h in hits:
        # exit immediately followed by entry: two touching parts, not surface
        if cleaned and not cleaned[-1][2] and h[2] and h[0] - cleaned[-1][0] <= T_TOL:
            cleaned.pop()
            continue
        cleaned.append(h)
    segs = []
    for a, b in zip(cleaned, cleaned[1:]):
        if a[2] and not b[2]:
            segs.append((a, b))
    return segs


def _contact(mesh: PartMesh, origin, direction, hit) -> SurfaceSample:
    t, f, _ = hit
    return SurfaceSample(origin + t * direction, mesh.face_normals[f].copy(), int(mesh.face_part[f]), f)


def _within_cone(outward, axis, mu, margin):
    cosang = np.clip(np.dot(-outward, axis), -1.0, 1.0)
    return np.arccos(cosang) <= np.arctan(mu) + margin + 1e-12


def candidates_along_line(mesh: PartMesh, assignment, point, direction, config: Mapping | None = None):
    """Candidates from one line through ``point`` along ``direction``."""
    cfg = {**DEFAULT_GRASP_CONFIG, **(config or {})}
    amap = assignment_map(assignment)
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    center, radius = mesh.bounding_sphere
    reach = 3.0 * radius + np.linalg.norm(np.asarray(point) - center)
    origin = np.asarray(point, dtype=np.float64) - reach * d
    out = []
    for a, b in _segments(mesh, origin, d):
        width = b[0] - a[0]
        if not 0.0 < width <= cfg["max_width"]:
            continue
        c1 = _contact(mesh, origin, d, a)
        c2 = _contact(mesh, origin, d, b)
        mu1 = amap[c1.part].material.friction
        mu2 = amap[c2.part].material.friction
        margin = cfg["antipodal_margin"]
        if _within_cone(c1.normal, d, mu1, margin) and _within_cone(c2.normal, -d, mu2, margin):
            out.append(GraspCandidate(c1, c2))
    return out


def generate_candidates(mesh: PartMesh, assignment, config: Mapping | None, seed: int,
                        mass_props: MassProperties | None = None) -> list[GraspCandidate]:
    """Antipodal candidates from seeded random lines through the bounding sphere.

    With ``mass_props`` given, a ``com_line_fraction`` of the lines is forced to
    cross the vertical through the centre of mass: two point contacts cannot
    resist a moment about their own axis, so only such lines can carry gravity.
    """
    cfg = {**DEFAULT_GRASP_CONFIG, **(config or {})}
    n_rays = int(cfg["n_rays"])
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    if not cfg["max_width"] > 0:
        raise ValueError("max_width must be positive")
    rng = make_rng(seed, "generate_candidates")
    center, radius = mesh.bounding_sphere
    dirs = _random_unit(rng, n_rays)
    # uniform points in the bounding ball
    pts = center + radius * _random_unit(rng, n_rays) * rng.random(n_rays)[:, None] ** (1.0 / 3.0)
    if mass_props is not None and cfg["com_line_fraction"] > 0:
        k = int(round(cfg["com_line_fraction"] * n_rays))
        lo, hi = mesh.bounds[:, 2]
        h = lo + (hi - lo) * rng.random(k)
        com = np.asarray(mass_props.com)
        pts[:k] = np.column_stack([np.full(k, com[0]), np.full(k, com[1]), h])
    out = []
    for p, d in zip(pts, dirs):
        out.extend(candidates_along_line(mesh, assignment, p, d, cfg))
    return out


# ---------------------------------------------------------------------------
# labelling


def task_wrenches(mass: float, config: Mapping) -> list[np.ndarray]:
    base = gravity_task(mass, config.get("gravity", GRAVITY)).f_ext
    out = [base]
    for dist in config.get("disturbances", []) or []:
        out.append(base + np.asarray(dist, dtype=np.float64).reshape(6))
    return out


def contact_models(candidate: GraspCandidate, assignment, config: Mapping,
                   max_force: float | None = None) -> tuple[ContactModel, ContactModel]:
    models = []
    for c in (candidate.contact1, candidate.contact2):
        m = contact_model_at(c, assignment, config)
        if max_force is not None and max_force < m.force_cap:
            m = ContactModel(m.mu, float(max_force), m.cone_edges)
        models.append(m)
    return tuple(models)


def label_grasp(candidate: GraspCandidate, mass_props: MassProperties, assignment,
                config: Mapping | None = None, max_force: float | None = None) -> GraspLabel:
    """Force-closure verdict against gravity plus any configured disturbances."""
    cfg = {**DEFAULT_GRASP_CONFIG, **(config or {})}
    G = grasp_matrix(candidate, mass_props)
    models = contact_models(candidate, assignment, cfg, max_force)
    normals = (candidate.contact1.normal, candidate.contact2.normal)
    worst = None
    for w in task_wrenches(mass_props.mass, cfg):
        lab = check_force_closure(G, WrenchTask(w), models, normals)
        if not lab.feasible:
            return lab
        if worst is None or lab.min_force > worst.min_force:
            worst = GraspLabel(True, lab.min_force, max(lab.slack, worst.slack if worst else 0.0), lab.forces)
    return worst


@dataclass
class LabeledCandidates:
    positives: list  # [(GraspCandidate, GraspLabel)]
    negatives: list  # [GraspCandidate]
    labels: list  # GraspLabel per input candidate, input order
    n_same_surface: int = 0


def same_surface_pairs(samples: SurfaceSamples, count: int, rng, max_angle_deg: float = 30.0,
                       max_tries: int | None = None) -> list[GraspCandidate]:
    """Pairs of distinct samples whose outward normals agree within ``max_angle_deg``."""
    out = []
    n = len(samples)
    if n < 2 or count <= 0:
        return out
    cos_lim = np.cos(np.radians(max_angle_deg))
    tries = max_tries or 200 * count
    for _ in range(tries):
        if len(out) >= count:
            break
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        if np.dot(samples.normals[i], samples.normals[j]) < cos_lim:
            continue
        if np.linalg.norm(samples.positions[i] - samples.positions[j]) <= 0:
            continue
        out.append(GraspCandidate(samples[int(i)], samples[int(j)]))
    return out


def label_candidates(candidates: Sequence[GraspCandidate], mass_props: MassProperties, assignment,
                     config: Mapping | None = None, samples: SurfaceSamples | None = None,
                     seed: int = 0) -> LabeledCandidates:
    """Split candidates into positives and a ratio-controlled negative set.

    A positive is force-closure feasible and both contacts' parts have a grasp
    prior above ``prior_threshold``.  Negatives are drawn first from the
    rejected candidates, then topped up with same-surface pairs from
    ``samples`` until ``round(negative_ratio * n_positive)`` is reached.
    """
    cfg = {**DEFAULT_GRASP_CONFIG, **(config or {})}
    amap = assignment_map(assignment)
    rng = make_rng(seed, "label_candidates")
    labels, positives, rejected = [], [], []
    for cand in candidates:
        lab = label_grasp(cand, mass_props, amap, cfg)
        labels.append(lab)
        prior_ok = (amap[cand.contact1.part].grasp_prior > cfg["prior_threshold"]
                    and amap[cand.contact2.part].grasp_prior > cfg["prior_threshold"])
        if lab.feasible and prior_ok:
            positives.append((cand, lab))
        else:
            rejected.append(cand)
    target = int(round(cfg["negative_ratio"] * len(positives)))
    order = rng.permutation(len(rejected)) if rejected else np.array([], dtype=int)
    negatives = [rejected[i] for i in order[:target]]
    n_same = 0
    if len(negatives) < target and samples is not None:
        extra = same_surface_pairs(samples, target - len(negatives), rng, cfg["same_surface_angle_deg"])
        negatives.extend(extra)
        n_same = len(extra)
    return LabeledCandidates(positives, negatives, labels, n_same)


def write_candidate_csv(path, candidates: Sequence[GraspCandidate], labels: Sequence[GraspLabel]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["candidate_id", "width", "feasible", "min_force"])
        for i, (c, lab) in enumerate(zip(candidates, labels)):
            w.writerow([i, repr(c.width), int(lab.feasible), repr(lab.min_force)])
