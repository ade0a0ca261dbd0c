from __future__ import annotations

from dataclasses import dataclass, field

from .materials import MassProperties, PartAssignment
from .mesh import PartMesh


@dataclass(frozen=True, eq=False)
class InstanceSpec:
    """One object with a concrete material per part."""

    instance_id: str
    object_id: str
    mesh: PartMesh | None
    assignments: tuple[PartAssignment, ...]
    mass_props: MassProperties | None
    seed: int
    hull_parts: tuple = field(default=())
    names: dict | None = None  # part names when no mesh is attached

    @property
    def part_names(self) -> dict:
        return self.mesh.part_names if self.mesh is not None else dict(self.names or {})

    def assignment(self, part: int) -> PartAssignment:
        for a in self.assignments:
            if a.part == part:
                return a
        raise KeyError(part)
