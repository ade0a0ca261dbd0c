"""Ground-truth affordance maps (Gaussian mixtures over grasp contacts) and pair snapping."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import NoPositiveGrasps

SIGMA_FRACTION = 0.05  # default bandwidth as a fraction of the bbox diagonal


@dataclass(frozen=True, eq=False)
class AffordanceMap:
    points: np.ndarray  # (n, 3)
    prob: np.ndarray  # (n,), sums to 1
    sigma: float

    def __post_init__(self):
        if len(self.points) != len(self.prob):
            raise ValueError("points and prob differ in length")


@dataclass(frozen=True, eq=False)
class PairLabelSet:
    positive_pairs: np.ndarray  # (K_p, 2) int
    negative_pairs: np.ndarray  # (K_n, 2) int
    dropped: int = 0

    def validate(self, n_points: int) -> None:
        for pairs in (self.positive_pairs, self.negative_pairs):
            if pairs.size and (pairs.min() < 0 or pairs.max() >= n_points):
                raise ValueError("pair index out of range")
        pos = {tuple(sorted(p)) for p in self.positive_pairs.tolist()}
        neg = {tuple(sorted(p)) for p in self.negative_pairs.tolist()}
        if pos & neg:
            raise ValueError("pair labelled both positive and negative")


def default_sigma(points) -> float:
    p = np.asarray(points)
    return SIGMA_FRACTION * float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def mixture_density(points, contacts, weights, sigma, impl=None) -> np.ndarray:
    """Unnormalized weighted Gaussian mixture evaluated at every point."""
    return kernels.gaussian_mixture(points, np.asarray(contacts, float).reshape(-1, 3),
                                    weights, sigma, impl=impl)


def build_affordance(points, contacts, weights, sigma: float | None = None,
                     quality=None, impl=None) -> AffordanceMap:
    """Normalized affordance over ``points`` from weighted grasp contacts.

    ``weights`` are the grasp priors at the contacts.  ``quality``, when given,
    multiplies them (optional grasp-quality weighting; off by default).
    """
    points = np.asarray(points, dtype=np.float64)
    contacts = np.asarray(contacts, dtype=np.float64).reshape(-1, 3)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if quality is not None:
        w = w * np.asarray(quality, dtype=np.float64).reshape(-1)
    if len(contacts) == 0 or not np.any(w > 0):
        raise NoPositiveGrasps("affordance needs at least one positively weighted contact")
    if sigma is None:
        sigma = default_sigma(points)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    dens = mixture_density(points, contacts, w, sigma, impl=impl)
    total = dens.sum()
    if not total > 0:
        raise NoPositiveGrasps("affordance mass underflowed; sigma too small for the sampling")
    return AffordanceMap(points, dens / total, float(sigma))


def snap_pairs(points, pairs, negatives=None) -> PairLabelSet:
    """Map contact pairs to nearest sampled points; drop pairs that collapse.

    ``pairs`` / ``negatives`` are sequences of ``(position1, position2)``.
    A negative that snaps onto a positive index pair is dropped as well.
    """
    tree = cKDTree(np.asarray(points, dtype=np.float64))
    dropped = 0

    def snap(seq):
        nonlocal dropped
        out = []
        for a, b in seq:
            _, i = tree.query(np.asarray(a, float))
            _, j = tree.query(np.asarray(b, float))
            if i == j:
                dropped += 1
                continue
            out.append((int(i), int(j)))
        return out

    pos = snap(pairs)
    neg = snap(negatives or [])
    pos_keys = {tuple(sorted(p)) for p in pos}
    kept = []
    for p in neg:
        if tuple(sorted(p)) in pos_keys:
            dropped += 1
        else:
            kept.append(p)
    as_arr = lambda x: np.array(x, dtype=np.int64).reshape(-1, 2)
    return PairLabelSet(as_arr(pos), as_arr(kept), dropped)


# ---------------------------------------------------------------------------
# visualization

# blue -> cyan -> green -> yellow -> red, evaluated on prob / max(prob)
COLORMAP_STOPS = np.array([
    [0.00, 0, 0, 255],
    [0.25, 0, 255, 255],
    [0.50, 0, 255, 0],
    [0.75, 255, 255, 0],
    [1.00, 255, 0, 0],
])


def colorize(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    top = v.max() if v.size and v.max() > 0 else 1.0
    x = np.clip(v / top, 0.0, 1.0)
    rgb = np.stack([np.interp(x, COLORMAP_STOPS[:, 0], COLORMAP_STOPS[:, k]) for k in (1, 2, 3)], axis=1)
    return np.rint(rgb).astype(np.uint8)


def write_colored_ply(path, points, values) -> None:
    """ASCII PLY point cloud, per-vertex RGB from ``colorize(values)``."""
    pts = np.asarray(points, dtype=np.float64)
    rgb = colorize(values)
    lines = [
        "ply", "format ascii 1.0", f"element vertex {len(pts)}",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue",
        "end_header",
    ]
    lines += [f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]}" for p, c in zip(pts, rgb)]
    Path(path).write_text("\n".join(lines) + "\n")
