"""Material library, per-part material assignment, mass properties and contact models.

Only plastic, brass and fiberglass carry published property values; the other
thirteen rows are handbook-style densities and dry friction coefficients
picked for this library and should be treated as configuration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateVolume, UnassignedPart
from .mesh import PartMesh, SurfaceSample
from .rng import make_rng

FRAGILITY_LEVELS = ("fragile", "normal", "tough")
# maximum normal contact force per fragility level, newtons (before config scale)
FRAGILITY_FORCE_CAP = {"fragile": 20.0, "normal": 100.0, "tough": 1000.0}


@dataclass(frozen=True)
class Material:
    name: str
    density: float  # kg/m^3
    friction: float  # Coulomb coefficient
    fragility: str
    common: bool = True
    source: str = "handbook"

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError(f"{self.name}: density must be positive")
        if not 0 < self.friction < 2:
            raise ValueError(f"{self.name}: friction must lie in (0, 2)")
        if self.fragility not in FRAGILITY_LEVELS:
            raise ValueError(f"{self.name}: unknown fragility {self.fragility!r}")

    def with_fragility(self, fragility: str) -> "Material":
        d = asdict(self)
        d["fragility"] = fragility
        return Material(**d)


_BUILTIN = [
    Material("plastic", 1400.0, 0.40, "normal", True, "published"),
    Material("brass", 8530.0, 0.38, "tough", True, "published"),
    Material("fiberglass", 2020.0, 0.60, "normal", False, "published"),
    Material("steel", 7850.0, 0.42, "tough", True),
    Material("aluminum", 2700.0, 0.47, "tough", True),
    Material("wood", 700.0, 0.50, "normal", True),
    Material("glass", 2500.0, 0.35, "fragile", True),
    Material("ceramic", 2400.0, 0.50, "fragile", True),
    Material("rubber", 1100.0, 1.00, "normal", True),
    Material("copper", 8960.0, 0.53, "tough", False),
    Material("titanium", 4500.0, 0.36, "tough", False),
    Material("leather", 860.0, 0.61, "normal", False),
    Material("cardboard", 690.0, 0.45, "fragile", True),
    Material("marble", 2700.0, 0.55, "fragile", False),
    Material("carbon_fiber", 1600.0, 0.30, "tough", False),
    Material("foam", 100.0, 0.80, "fragile", False),
]


def builtin_materials() -> list[Material]:
    """The 16-row default material table."""
    return list(_BUILTIN)


def material_lookup(table: Sequence[Material] | None = None) -> dict[str, Material]:
    return {m.name: m for m in (table or _BUILTIN)}


def save_material_table(table: Sequence[Material], path) -> None:
    Path(path).write_text(json.dumps([asdict(m) for m in table], indent=1))


def load_material_table(path) -> list[Material]:
    return [Material(**row) for row in json.loads(Path(path).read_text())]


# ---------------------------------------------------------------------------
# grasp priors

DEFAULT_PRIOR_POLICY = {
    "keywords": {
        "blade": 0.05, "screen": 0.05, "lens": 0.05,
        "handle": 1.0, "base": 1.0, "frame": 1.0,
    },
    "default": 0.7,
}


def grasp_prior_for(part_name: str, policy: Mapping | None = None) -> float:
    """Prior that a human would grasp a part, from keyword matches in its name.

    When several keywords match, the lowest prior wins (avoidance dominates).
    """
    policy = policy or DEFAULT_PRIOR_POLICY
    name = part_name.lower()
    hits = [float(p) for kw, p in policy["keywords"].items() if kw in name]
    return min(hits) if hits else float(policy["default"])


@dataclass(frozen=True)
class PartAssignment:
    part: int
    material: Material
    grasp_prior: float

    def __post_init__(self):
        if not 0.0 <= self.grasp_prior <= 1.0:
            raise ValueError(f"grasp_prior {self.grasp_prior} outside [0, 1]")


def assign_materials(mesh: PartMesh, seed: int, table: Sequence[Material] | None = None,
                     prior_policy: Mapping | None = None,
                     prior_overrides: Mapping[int, float] | None = None) -> list[PartAssignment]:
    """Draw one material per part uniformly from ``table`` (seeded)."""
    table = list(table or _BUILTIN)
    if not table:
        raise ValueError("material table is empty")
    rng = make_rng(seed, "assign_materials")
    pids = sorted(mesh.part_names)
    picks = rng.integers(0, len(table), size=len(pids))
    overrides = prior_overrides or {}
    out = []
    for pid, k in zip(pids, picks):
        prior = overrides.get(pid, grasp_prior_for(mesh.part_names[pid], prior_policy))
        out.append(PartAssignment(pid, table[int(k)], float(prior)))
    return out


def fixed_assignment(mesh: PartMesh, materials: Mapping[str, Material | str],
                     table: Sequence[Material] | None = None,
                     prior_policy: Mapping | None = None) -> list[PartAssignment]:
    """Assignment from an explicit ``part name -> material`` mapping."""
    lookup = material_lookup(table)
    out = []
    for pid in sorted(mesh.part_names):
        pname = mesh.part_names[pid]
        m = materials[pname]
        m = lookup[m] if isinstance(m, str) else m
        out.append(PartAssignment(pid, m, grasp_prior_for(pname, prior_policy)))
    return out


def assignment_map(assignment) -> dict[int, PartAssignment]:
    if isinstance(assignment, Mapping):
        return dict(assignment)
    return {a.part: a for a in assignment}


# ---------------------------------------------------------------------------
# mass properties


@dataclass(frozen=True)
class MassProperties:
    mass: float
    com: np.ndarray
    per_part_mass: dict
    per_part_volume: dict
    hull_parts: tuple = ()  # parts whose volume came from the convex hull


def part_is_closed(mesh: PartMesh, part: int) -> bool:
    return mesh.submesh(part).is_watertight


def _signed_volume(verts, faces):
    """Signed volume and volume-weighted centroid via origin-apex tetrahedra."""
    a = verts[faces[:, 0]]
    b = verts[faces[:, 1]]
    c = verts[faces[:, 2]]
    vol6 = np.einsum("ij,ij->i", a, np.cross(b, c))
    volume = vol6.sum() / 6.0
    if volume == 0.0:
        return 0.0, np.zeros(3)
    centroid = (vol6[:, None] * (a + b + c)).sum(axis=0) / (4.0 * vol6.sum())
    return float(volume), centroid


def _hull_volume(points):
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(points)
    except (QhullError, ValueError):
        return 0.0, np.zeros(3)
    # orient hull facets outward so the signed-tetra formula applies
    faces = hull.simplices.copy()
    inner = points[hull.vertices].mean(axis=0)
    for i, f in enumerate(faces):
        n = np.cross(points[f[1]] - points[f[0]], points[f[2]] - points[f[0]])
        if np.dot(n, points[f[0]] - inner) < 0:
            faces[i] = f[[0, 2, 1]]
    return _signed_volume(points, faces)


def mass_properties(mesh: PartMesh, assignment, hull_fallback: bool = False) -> MassProperties:
    """Mass, centre of mass and per-part masses from closed part volumes.

    A part whose faces do not form a closed shell has no enclosed volume and
    raises ``DegenerateVolume``, unless ``hull_fallback`` is set, in which case
    its convex hull stands in (and the part is listed in ``hull_parts``).
    """
    amap = assignment_map(assignment)
    per_mass, per_vol, hull_parts = {}, {}, []
    total_m = 0.0
    moment = np.zeros(3)
    for pid in sorted(mesh.part_names):
        if pid not in amap:
            raise UnassignedPart(f"part {pid} ({mesh.part_names[pid]}) has no material")
        idx = mesh.part_faces(pid)
        if idx.size == 0:
            continue
        sub = mesh.submesh(pid)
        vol, cen = (_signed_volume(sub.vertices, sub.faces) if sub.is_watertight else (0.0, np.zeros(3)))
        if abs(vol) < 1e-12:
            if not hull_fallback:
                raise DegenerateVolume(f"part {pid} ({mesh.part_names[pid]}) encloses no volume")
            used = np.unique(sub.faces)
            vol, cen = _hull_volume(sub.vertices[used])
            if abs(vol) < 1e-12:
                raise DegenerateVolume(f"part {pid} is flat even after convex hull")
            hull_parts.append(pid)
        vol = abs(vol)
        m = amap[pid].material.density * vol
        per_mass[pid] = m
        per_vol[pid] = vol
        total_m += m
        moment += m * cen
    if total_m <= 0:
        raise DegenerateVolume("object has no mass")
    return MassProperties(total_m, moment / total_m, per_mass, per_vol, tuple(hull_parts))


# ---------------------------------------------------------------------------
# contact model


@dataclass(frozen=True)
class ContactModel:
    mu: float
    force_cap: float
    cone_edges: int = 16

    def __post_init__(self):
        if self.cone_edges < 4:
            raise ValueError("cone_edges must be >= 4")
        if not self.force_cap > 0:
            raise ValueError("force_cap must be positive")


def force_cap_for(fragility: str, scale: float = 1.0) -> float:
    return FRAGILITY_FORCE_CAP[fragility] * float(scale)


def contact_model_at(sample: SurfaceSample | int, assignment, config: Mapping | None = None) -> ContactModel:
    """Friction coefficient and normal-force cap at a surface sample's part."""
    config = config or {}
    part = sample if isinstance(sample, (int, np.integer)) else sample.part
    amap = assignment_map(assignment)
    if int(part) not in amap:
        raise UnassignedPart(f"part {part} has no material assignment")
    mat = amap[int(part)].material
    return ContactModel(
        mu=mat.friction,
        force_cap=force_cap_for(mat.fragility, config.get("force_cap_scale", 1.0)),
        cone_edges=int(config.get("cone_edges", 16)),
    )
