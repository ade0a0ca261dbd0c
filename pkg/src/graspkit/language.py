"""Templated instance summaries and rule-based hard-set scoring.

Summaries state the object and its materials, then call out extreme parts
only when the difference is obvious:

* densest part when its density exceeds the runner-up by a factor of
  ``DENSITY_RATIO`` (otherwise the lightest part, by the same test);
* highest / lowest friction parts when they differ from the runner-up by
  more than ``FRICTION_GAP``;
* every fragile part, and part-level advice derived from the grasp priors.

Sentence patterns are chosen with the instance seed so that the wording
varies across instances while the content stays fixed.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInstance
from .instance import InstanceSpec
from .materials import builtin_materials
from .rng import make_rng

DENSITY_RATIO = 1.25
FRICTION_GAP = 0.1
AVOID_PRIOR = 0.1
HARD_THRESHOLD = 3

# superlative property -> phrasings that may appear in text
PHRASES = {
    "highest density": ("the highest density", "the greatest density"),
    "lowest density": ("the lowest density", "the smallest density"),
    "highest friction": ("the highest friction", "the most friction"),
    "lowest friction": ("the lowest friction", "the least friction"),
}
_MATERIAL_CLAUSES = (
    "The {part} is made of {mat}",
    "The {part}'s material is {mat}",
    "The {part} is {mat}",
)
_NUMBER_WORDS = {2: "two", 3: "three", 4: "four", 5: "five", 6: "six", 7: "seven", 8: "eight"}


@dataclass(frozen=True)
class LanguageSummary:
    text: str
    emphasized: tuple = ()  # ((part display name, property), ...)


@dataclass(frozen=True)
class HardSetVerdict:
    is_hard: bool
    score: int
    criteria_hit: dict = field(default_factory=dict)


def _display_names(instance: InstanceSpec) -> dict[int, str]:
    """Part id -> readable unique name (duplicates get an ordinal)."""
    names = {}
    seen: dict[str, int] = {}
    for pid in sorted(instance.part_names):
        base = instance.part_names[pid].replace("_", " ")
        seen[base] = seen.get(base, 0) + 1
        names[pid] = base if seen[base] == 1 else f"{base} {seen[base]}"
    return names


def _join(items: list[str]) -> str:
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def _clear_extreme(values: dict[int, float], highest: bool, obvious) -> int | None:
    """Part whose value is obviously above (below) every other part's, if any."""
    if len(values) < 2:
        return None
    order = sorted(values, key=lambda p: values[p], reverse=highest)
    first, second = values[order[0]], values[order[1]]
    return order[0] if obvious(first, second) else None


def extreme_parts(instance: InstanceSpec) -> dict[str, int]:
    """Property -> part id for every superlative the rules allow."""
    dens = {a.part: a.material.density for a in instance.assignments}
    fric = {a.part: a.material.friction for a in instance.assignments}
    out = {}
    dense = _clear_extreme(dens, True, lambda a, b: a / b > DENSITY_RATIO)
    if dense is not None:
        out["highest density"] = dense
    else:
        light = _clear_extreme(dens, False, lambda a, b: b / a > DENSITY_RATIO)
        if light is not None:
            out["lowest density"] = light
    hi = _clear_extreme(fric, True, lambda a, b: a - b > FRICTION_GAP)
    if hi is not None:
        out["highest friction"] = hi
    lo = _clear_extreme(fric, False, lambda a, b: b - a > FRICTION_GAP)
    if lo is not None:
        out["lowest friction"] = lo
    return out


def summarize_instance(instance: InstanceSpec) -> LanguageSummary:
    if not instance.assignments:
        raise EmptyInstance(f"{instance.instance_id}: no part assignments")
    rng = make_rng(instance.seed, "summary")
    names = _display_names(instance)
    obj = instance.object_id.replace("_", " ")
    amap = {a.part: a for a in instance.assignments}
    pids = sorted(amap)
    emphasized = []
    sentences = []

    if len(pids) == 1:
        a = amap[pids[0]]
        sentences.append(f"The {obj} is made of {a.material.name.replace('_', ' ')}.")
        if a.material.fragility == "fragile":
            sentences.append(f"The {obj} is fragile.")
            emphasized.append((names[pids[0]], "fragile"))
    else:
        count = _NUMBER_WORDS.get(len(pids), str(len(pids)))
        sentences.append(f"The {obj} has {count} parts: {_join([names[p] for p in pids])}.")
        by_part: dict[int, list[str]] = {}
        for prop, pid in extreme_parts(instance).items():
            by_part.setdefault(pid, []).append(prop)
        for pid in pids:
            mat = amap[pid].material.name.replace("_", " ")
            clause = _MATERIAL_CLAUSES[int(rng.integers(len(_MATERIAL_CLAUSES)))].format(part=names[pid], mat=mat)
            props = by_part.get(pid, [])
            if props:
                frags = [PHRASES[p][int(rng.integers(len(PHRASES[p])))] for p in props]
                clause += " with " + _join(frags)
                emphasized += [(names[pid], p) for p in props]
            sentences.append(clause + ".")
        for pid in pids:
            if amap[pid].material.fragility == "fragile":
                sentences.append(f"The {names[pid]} is fragile.")
                emphasized.append((names[pid], "fragile"))

    avoid = [p for p in pids if amap[p].grasp_prior < AVOID_PRIOR]
    if avoid:
        ok = [p for p in pids if p not in avoid]
        for p in avoid:
            sentences.append(f"Avoid grasping the {names[p]}.")
            emphasized.append((names[p], "avoid"))
        if ok:
            best = max(ok, key=lambda p: (amap[p].grasp_prior, -p))
            sentences.append(f"Prefer grasping the {names[best]}.")
            emphasized.append((names[best], "prefer"))
    else:
        sentences.append(("It can be grasped on any part.", "Any part is suitable for grasping.")[int(rng.integers(2))])
    return LanguageSummary(" ".join(sentences), tuple(emphasized))


def check_summary(summary: LanguageSummary, instance: InstanceSpec) -> list[str]:
    """Re-derive every superlative in ``summary.text`` from the part table.

    Returns a list of problems (empty when consistent).  Each sentence that
    carries a superlative must name exactly one part, and that part must be
    the obvious extreme for the property according to the instance data.
    """
    problems = []
    names = _display_names(instance)
    amap = {a.part: a for a in instance.assignments}
    truth = extreme_parts(instance)
    seen = {}
    for sentence in re.split(r"(?<=\.)\s+", summary.text):
        props = [p for p, variants in PHRASES.items() if any(v in sentence for v in variants)]
        if not props:
            continue
        mentioned = [pid for pid, n in names.items() if re.search(rf"\b{re.escape(n)}\b", sentence)]
        if len(mentioned) != 1:
            problems.append(f"superlative sentence names {len(mentioned)} parts: {sentence!r}")
            continue
        for prop in props:
            seen[prop] = mentioned[0]
            if truth.get(prop) != mentioned[0]:
                problems.append(f"{names[mentioned[0]]!r} is not the part with {prop}")
    for prop, pid in truth.items():
        if prop not in seen:
            problems.append(f"missing superlative {prop} for {names[pid]!r}")
    present = {a.material.name.replace("_", " ") for a in instance.assignments}
    for m in builtin_materials():
        mname = m.name.replace("_", " ")
        if mname not in present and re.search(rf"\b{re.escape(mname)}\b", summary.text):
            problems.append(f"mentions absent material {mname!r}")
    for pid, a in amap.items():
        if a.material.fragility == "fragile" and (names[pid], "fragile") not in summary.emphasized:
            problems.append(f"fragile part {names[pid]!r} not mentioned")
    return problems


# ---------------------------------------------------------------------------
# hard set

def _table_medians(table):
    table = table or builtin_materials()
    return (float(np.median([m.friction for m in table])),
            float(np.median([m.density for m in table])))


def classify_hard(summary: LanguageSummary, instance: InstanceSpec,
                  threshold: int = HARD_THRESHOLD, table=None) -> HardSetVerdict:
    """Score the five counter-intuitiveness criteria; hard iff score >= threshold.

    Criteria are judged for the object as a whole:

    * uncommon material: every part is made of an uncommon material;
    * higher friction: mass-weighted friction exceeds the table median by
      more than ``FRICTION_GAP``;
    * heavier density: mean density exceeds the table median by more than a
      factor ``DENSITY_RATIO``;
    * fragile: the heaviest part is fragile;
    * specific guidance: the summary names a part to avoid or prefer.
    """
    med_mu, med_rho = _table_medians(table)
    amap = {a.part: a for a in instance.assignments}
    if instance.mass_props is not None:
        w = {p: instance.mass_props.per_part_mass.get(p, 0.0) for p in amap}
        vol = {p: instance.mass_props.per_part_volume.get(p, 0.0) for p in amap}
    else:
        w = {p: 1.0 for p in amap}
        vol = {p: 1.0 for p in amap}
    wsum = sum(w.values()) or 1.0
    mu = sum(w[p] * amap[p].material.friction for p in amap) / wsum
    vsum = sum(vol.values()) or 1.0
    rho = sum(vol[p] * amap[p].material.density for p in amap) / vsum
    heaviest = max(amap, key=lambda p: (w[p], -p))
    hits = {
        "uncommon material": all(not a.material.common for a in amap.values()),
        "higher friction": mu > med_mu + FRICTION_GAP,
        "heavier density": rho > med_rho * DENSITY_RATIO,
        "fragile": amap[heaviest].material.fragility == "fragile",
        "specific guidance": any(prop in ("avoid", "prefer") for _, prop in summary.emphasized),
    }
    score = int(sum(hits.values()))
    return HardSetVerdict(score >= threshold, score, hits)
