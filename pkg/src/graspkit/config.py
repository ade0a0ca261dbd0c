"""Central defaults, config-file loading and ``key=value`` overrides.

Every tunable used by the pipeline lives in ``DEFAULT_CONFIG``.  Config files
(TOML, or JSON as a fallback) and ``--set section.key=value`` overrides are
merged on top of it, and the merged dict is hashed into every record so that
two datasets built with different settings never look alike.
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path

from .errors import ConfigError
from .fixtures import DESK_CORPUS
from .grasp import DEFAULT_GRASP_CONFIG
from .materials import DEFAULT_PRIOR_POLICY

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {
        "objects": list(DESK_CORPUS),
        "instances_per_object": 10,
        "n_points": 2048,
        "max_retries": 5,
        "workers": 1,
        "split_fractions": [0.8, 0.1, 0.1],
        "hull_fallback": True,
        "material_table": None,  # path to a JSON table, None = built-in 16 rows
    },
    "grasp": copy.deepcopy(DEFAULT_GRASP_CONFIG),
    "affordance": {"sigma_fraction": 0.05, "quality_weighting": False},
    "language": {"hard_threshold": 3},
    "priors": copy.deepcopy(DEFAULT_PRIOR_POLICY),
    "metrics": {"kld_eta": 1e-12, "auc_positive_threshold": None},
    "gripper": {"max_width": 0.08, "max_force": 1000.0, "same_surface_angle_deg": 30.0},
    "bridge": {
        "embed_dim": 32,
        "hidden": 64,
        "delta_p": 0.1,
        "delta_n": 1.0,
        "lambda": 1.0,
        "steps": 2000,
        "lr": 0.2,
        "instances": 10,
        "n_points": 64,
    },
}

# reference large-corpus split ratio (173,856 / 10,000 / 10,000 of 193,856)
REFERENCE_SPLIT = (0.8968, 0.0516, 0.0516)


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be a table")
            if where == "priors.keywords":  # open-ended: new keywords allowed
                out[k] = {**base[k], **copy.deepcopy(v)}
            else:
                out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the file at ``path`` (TOML or JSON), then overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        try:
            raw = p.read_bytes()
        except OSError as e:
            raise ConfigError(f"cannot read config {p}: {e}") from e
        try:
            data = tomllib.loads(raw.decode()) if p.suffix.lower() == ".toml" else json.loads(raw)
        except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ConfigError(f"cannot parse config {p}: {e}") from e
        cfg = _merge(cfg, data)
    for item in overrides:
        cfg = apply_override(cfg, item)
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        low = text.lower()
        if low in ("true", "false"):
            return low == "true"
        if low in ("none", "null"):
            return None
        return text


def apply_override(cfg: dict, item: str) -> dict:
    """Apply one ``dotted.key=value`` override (value parsed as JSON if possible)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    update = _parse_value(text)
    for p in reversed(parts):
        update = {p: update}
    return _merge(cfg, update)


def config_hash(cfg) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, repr floats)."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def flat_items(cfg: dict, prefix: str = ""):
    """``(dotted key, value)`` pairs, used by ``info --defaults``."""
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, dict) and v:
            yield from flat_items(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v
